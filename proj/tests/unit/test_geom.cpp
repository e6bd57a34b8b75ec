#include "doctest.h"

#include "coach/errors.hpp"
#include "coach/geom.hpp"
#include "coach/tracks.hpp"

#include <random>

using namespace coach;

namespace {

Trajectory line_traj(int n, double yaw) {
    Trajectory t;
    for (int i = 0; i < n; ++i) {
        State s;
        s.t = i * kDt;
        s.x = 3.0 + i * std::cos(yaw);
        s.y = -1.0 + i * std::sin(yaw);
        s.yaw = yaw;
        s.v = 10.0;
        t.states.push_back(s);
    }
    return t;
}

}  // namespace

TEST_CASE("to_ego_frame maps the reference state to the origin") {
    const Trajectory t = line_traj(5, 0.7);
    const Trajectory e = to_ego_frame(t, t.states.back());
    CHECK(e.frame == Frame::kEgo);
    CHECK(e.states.back().x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.states.back().y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.states.back().yaw == doctest::Approx(0.0));
    CHECK(e.states[2].v == 10.0);
}

TEST_CASE("to_ego_frame pure translation and quarter rotation") {
    State ref;
    ref.x = 5.0;
    Trajectory t;
    State p;
    p.x = 6.0;
    t.states = {p};
    auto e = to_ego_frame(t, ref);
    CHECK(e.states[0].x == doctest::Approx(1.0));
    CHECK(e.states[0].y == doctest::Approx(0.0));

    State rot;
    rot.yaw = kPi / 2;
    State q;
    q.y = 1.0;
    t.states = {q};
    e = to_ego_frame(t, rot);
    CHECK(e.states[0].x == doctest::Approx(1.0));
    CHECK(std::abs(e.states[0].y) < 1e-12);
}

TEST_CASE("to_ego_frame rejects empty input") {
    CHECK_THROWS_AS(to_ego_frame(Trajectory{}, State{}), DataError);
}

TEST_CASE("to_ego_frame preserves pairwise distances") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-100, 100);
    Trajectory t;
    for (int i = 0; i < 30; ++i) {
        State s;
        s.t = i * kDt;
        s.x = u(rng);
        s.y = u(rng);
        s.yaw = u(rng) / 10;
        t.states.push_back(s);
    }
    State ref;
    ref.x = u(rng);
    ref.y = u(rng);
    ref.yaw = 2.3;
    const auto e = to_ego_frame(t, ref);
    double worst = 0.0;
    for (std::size_t i = 0; i < t.states.size(); ++i)
        for (std::size_t j = i + 1; j < t.states.size(); ++j)
            worst = std::max(worst, std::abs(dist(t.states[i].pos(), t.states[j].pos()) -
                                             dist(e.states[i].pos(), e.states[j].pos())));
    CHECK(worst < 1e-9);
}

TEST_CASE("Trajectory::validate checks dt and physical ranges") {
    Trajectory t = line_traj(4, 0.0);
    CHECK_NOTHROW(t.validate());
    t.states[2].t += 0.01;
    CHECK_THROWS_AS(t.validate(), DataError);
    t = line_traj(4, 0.0);
    t.states[1].v = -1.0;
    CHECK_THROWS_AS(t.validate(), DataError);
    t = line_traj(1, 0.0);
    CHECK_THROWS_AS(t.validate(), DataError);
}

TEST_CASE("arc_length_project signs and distances") {
    const std::vector<Vec2> line{{0, 0}, {10, 0}};
    auto pr = arc_length_project(line, {3, 2});
    CHECK(pr.s == doctest::Approx(3.0));
    CHECK(pr.d == doctest::Approx(2.0));
    pr = arc_length_project(line, {3, -2});
    CHECK(pr.s == doctest::Approx(3.0));
    CHECK(pr.d == doctest::Approx(-2.0));
    pr = arc_length_project(line, {7, 0});
    CHECK(pr.d == 0.0);
}

TEST_CASE("arc_length_project: moving along the left normal increases d by the same amount") {
    const auto track = make_demo_circuit();
    const auto& line = track.centerline;
    const auto normals = track.normals();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> pick(20, line.size() - 20);
    std::uniform_real_distribution<double> off(-3.0, 3.0);
    const double eps = 1e-4;
    for (int k = 0; k < 50; ++k) {
        const std::size_t i = pick(rng);
        // midpoint of a segment keeps us away from vertex normal ambiguity
        const Vec2 a = line[i], b = line[i + 1];
        const Vec2 mid = 0.5 * (a + b);
        const Vec2 tan = (1.0 / dist(a, b)) * (b - a);
        const Vec2 left{-tan.y, tan.x};
        const Vec2 p = mid + off(rng) * left;
        const auto p0 = arc_length_project(line, p, true);
        const auto p1 = arc_length_project(line, p + eps * left, true);
        CHECK(p1.d - p0.d == doctest::Approx(eps).epsilon(1e-6));
    }
    (void)normals;
}

TEST_CASE("closed projection reports s modulo the loop length") {
    const auto circle = make_circle_track(10.0, 2.0, 64);
    const double total = polyline_length(circle.centerline);
    const auto pr = arc_length_project(circle.centerline, {10.0, -1e-9}, true);
    CHECK(pr.s >= 0.0);
    CHECK(pr.s < total);
    // a point outside the circle is to the right of CCW travel
    CHECK(arc_length_project(circle.centerline, {12.0, 0.5}, true).d < 0.0);
}

TEST_CASE("resample_polyline") {
    const std::vector<Vec2> seg{{0, 0}, {10, 0}};
    auto r = resample_polyline(seg, 3);
    REQUIRE(r.size() == 3);
    CHECK(r[1].x == doctest::Approx(5.0));
    CHECK(r[2].x == 10.0);

    const std::vector<Vec2> uniform{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    r = resample_polyline(uniform, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(r[i].x - uniform[i].x) < 1e-9);
        CHECK(std::abs(r[i].y - uniform[i].y) < 1e-9);
    }

    const std::vector<Vec2> ell{{0, 0}, {1, 0}, {1, 1}};
    r = resample_polyline(ell, 3);
    CHECK(r[1].x == doctest::Approx(1.0));
    CHECK(r[1].y == doctest::Approx(0.0));

    CHECK_THROWS_AS(resample_polyline(std::vector<Vec2>{{1, 1}, {1, 1}}, 3), DataError);
}

TEST_CASE("resample_polyline preserves arc length") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 20; ++k) {
        std::vector<Vec2> line{{0, 0}};
        for (int i = 0; i < 6; ++i) line.push_back(line.back() + Vec2{1.0 + u(rng), 0.1 * u(rng)});
        // collinear-ish lines: resampling keeps every original vertex only when straight,
        // so use a straight chain with uneven spacing
        for (auto& p : line) p.y = 0.0;
        const auto r = resample_polyline(line, 9);
        CHECK(std::abs(polyline_length(r) - polyline_length(line)) < 1e-9);
    }
}

TEST_CASE("extract_local_map on a straight track") {
    const auto track = make_straight_track(400.0, 5.0, 2.0);
    State pose;
    pose.x = 200.0;
    const auto lm = extract_local_map(track, pose, 50.0);
    REQUIRE(lm.polylines.size() == 3);
    for (const auto& pl : lm.polylines) {
        const double len = polyline_length(pl.pts) * 50.0;
        CHECK(len > 99.0);
        CHECK(len <= 100.0 + 1e-9);
        // centered on the ego pose
        CHECK(pl.pts.front().x == doctest::Approx(-pl.pts.back().x).epsilon(1e-9));
        for (auto p : pl.pts) CHECK(norm(p) <= 1.0 + 1e-12);
    }
}

TEST_CASE("extract_local_map returns nothing when the map is out of range") {
    const auto track = make_straight_track(100.0, 5.0);
    State pose;
    pose.y = 500.0;
    CHECK(extract_local_map(track, pose, 10.0).polylines.empty());
}

TEST_CASE("extract_local_map round-trips clipped points") {
    const auto track = make_demo_circuit();
    State pose;
    pose.x = 790.0;
    pose.y = -240.0;
    pose.yaw = 0.9;
    const double radius = 50.0;
    const auto lm = extract_local_map(track, pose, radius);
    REQUIRE(!lm.polylines.empty());
    for (const auto& pl : lm.polylines) {
        const std::vector<Vec2>* source = nullptr;
        std::vector<Vec2> left = track.left_edge(), right = track.right_edge();
        if (pl.role == PolylineRole::kCenter) source = &track.centerline;
        if (pl.role == PolylineRole::kLeftEdge) source = &left;
        if (pl.role == PolylineRole::kRightEdge) source = &right;
        REQUIRE(source != nullptr);
        for (std::size_t k = 1; k + 1 < pl.pts.size(); ++k) {
            const Vec2 world = from_ego(radius * pl.pts[k], pose);
            // interior points are original vertices
            double best = 1e9;
            for (auto q : *source) best = std::min(best, dist(q, world));
            CHECK(best < 1e-9);
        }
    }
}

TEST_CASE("track json round trip and validation") {
    auto t = make_circle_track(30.0, 4.0, 40);
    t.raceline = t.centerline;
    t.race_speeds.assign(t.raceline.size(), 12.5);
    const auto back = track_from_json(track_to_json(t));
    CHECK(back.centerline == t.centerline);
    CHECK(back.half_width == t.half_width);
    CHECK(back.race_speeds == t.race_speeds);
    CHECK(back.closed);

    CHECK_THROWS_AS(track_from_json(R"({"closed":false,"centerline":[[0,0],[1,0],[2,0]],"half_width":[1,1]})"),
                    DataError);
    CHECK_THROWS_AS(track_from_json(R"({"closed":false,"centerline":[[0,0],[1,0],[2,0]],"half_width":[1,0,1]})"),
                    DataError);
    CHECK_THROWS_AS(track_from_json("not json"), DataError);
}
