#include "doctest.h"

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/raceline.hpp"
#include "coach/track_data.hpp"
#include "coach/tracks.hpp"

#include <cmath>
#include <filesystem>

#include <unistd.h>

using namespace coach;

namespace {

const TrackModel& circuit() {
    static const TrackModel t = attach_raceline(make_demo_circuit());
    return t;
}

const TrackModel& straight() {
    static const TrackModel t = attach_raceline(make_straight_track(400.0, 5.0));
    return t;
}

// Car moving along +x at offset y with speed v_of(x), one state per 0.1 s.
template <typename F>
std::vector<State> along_x(double x0, double y, std::size_t n, F v_of) {
    std::vector<State> out;
    double x = x0;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = v_of(x);
        out.push_back({0.1 * static_cast<double>(k), x, y, 0.0, v, 0.0, 0.0});
        x += v * 0.1;
    }
    return out;
}

double max_abs_offset(const Trajectory& tr, const RacelineRef& ref) {
    double worst = 0.0;
    for (const auto& s : tr.states) worst = std::max(worst, std::abs(ref.project(s.pos()).d));
    return worst;
}

}  // namespace

TEST_CASE("oracle on constructed windows") {
    const RacelineRef ref(straight());
    auto target = [&](double x) { return ref.speed_at(ref.project({x, 0}).s); };

    const auto clean = oracle_instructions(along_x(100, 0.0, 40, target), ref);
    REQUIRE(clean);
    CHECK(*clean == std::vector<std::uint8_t>{0, 0, 0, 0, 0});

    // d = +2 m: left of the line, so the cue is to move right
    const auto left = oracle_instructions(along_x(100, 2.0, 40, target), ref);
    REQUIRE(left);
    CHECK(*left == std::vector<std::uint8_t>{0, 0, 0, 1, 0});
    const auto right = oracle_instructions(along_x(100, -2.0, 40, target), ref);
    CHECK(*right == std::vector<std::uint8_t>{0, 0, 1, 0, 0});

    // 30 % under target
    const auto slow = oracle_instructions(along_x(100, 0.0, 40, [&](double x) { return 0.7 * target(x); }), ref);
    CHECK((*slow)[1] == 1);

    CHECK_FALSE(oracle_instructions(along_x(100, 40.0, 5, target), ref));
}

TEST_CASE("oracle brake and turn cues on the circuit") {
    const RacelineRef ref(circuit());
    double s_dec = -1;
    for (double s = 0; s < ref.length(); s += 1.0)
        if (ref.decelerating_at(s) && ref.speed_at(s) > 10.0) {
            s_dec = s;
            break;
        }
    REQUIRE(s_dec >= 0);
    const Vec2 p = ref.point(s_dec);
    const State fast{0, p.x, p.y, 0, 1.2 * ref.speed_at(s_dec), 0, 0};
    CHECK((*oracle_instructions(std::span(&fast, 1), ref))[0] == 1);
    const State ok{0, p.x, p.y, 0, ref.speed_at(s_dec), 0, 0};
    CHECK((*oracle_instructions(std::span(&ok, 1), ref))[0] == 0);

    // crossing a corner entry
    REQUIRE_FALSE(ref.corner_entries().empty());
    const double e = ref.corner_entries().front();
    std::vector<State> cross;
    for (double s : {e - 3.0, e - 1.0, e + 1.0}) {
        const Vec2 q = ref.point(s);
        cross.push_back({0, q.x, q.y, 0, ref.speed_at(s), 0, 0});
    }
    CHECK((*oracle_instructions(cross, ref))[4] == 1);
    cross.erase(cross.begin() + 2);
    CHECK((*oracle_instructions(cross, ref))[4] == 0);
}

TEST_CASE("skill metrics examples") {
    const RacelineRef ref(straight());
    auto v10 = [](double) { return 10.0; };
    auto on_line = along_x(50, 0.0, 20, v10);
    for (auto& s : on_line) s.steer = 0.02;
    auto m = compute_skill_metrics(on_line, ref);
    CHECK(m.steer_smoothness == doctest::Approx(0.0));
    CHECK(m.raceline_dist == doctest::Approx(0.0));

    auto zigzag = along_x(50, 1.5, 20, v10);
    for (std::size_t k = 0; k < zigzag.size(); ++k) zigzag[k].steer = k % 2 ? 0.1 : -0.1;
    m = compute_skill_metrics(zigzag, ref);
    CHECK(m.steer_smoothness == doctest::Approx(4.0));
    CHECK(m.raceline_dist == doctest::Approx(1.5));

    CHECK_THROWS_AS(compute_skill_metrics(std::span(zigzag).first(1), ref), ContractViolation);
}

TEST_CASE("scripted students") {
    const RacelineRef ref(circuit());
    StudentParams perfect;
    perfect.speed_scale = 0.7;
    const Trajectory a = simulate_student(circuit(), perfect, 1.0, 3);
    CHECK(max_abs_offset(a, ref) < 0.5);

    StudentParams biased;
    biased.line_bias = 1.0;
    const Trajectory b = simulate_student(circuit(), biased, 1.0, 3);
    double mean_d = 0;
    for (const auto& s : b.states) mean_d += ref.project(s.pos()).d;
    mean_d /= static_cast<double>(b.states.size());
    CHECK(mean_d >= 0.5);
    CHECK(mean_d <= 1.5);

    StudentParams noisy;
    noisy.line_noise = 0.5;
    noisy.steer_noise = 0.01;
    const Trajectory n1 = simulate_student(circuit(), noisy, 0.3, 9);
    const Trajectory n2 = simulate_student(circuit(), noisy, 0.3, 9);
    CHECK(n1.states == n2.states);
    CHECK_FALSE(n1.states == simulate_student(circuit(), noisy, 0.3, 10).states);

    CHECK_THROWS_AS(simulate_student(make_demo_circuit(), perfect, 1.0, 0), DataError);
    StudentParams bad;
    bad.speed_scale = 2.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("track dataset from a perfect student is mostly quiet") {
    TrackGenConfig cfg;
    cfg.roster = {StudentParams{}};
    cfg.laps = 2.0;
    cfg.seed = 1;
    const Dataset ds = gen_track_dataset(circuit(), cfg);
    REQUIRE(ds.samples.size() > 50);
    std::size_t zero = 0;
    for (const auto& s : ds.samples) {
        bool any = false;
        for (auto v : *s.teacher) any |= v != 0;
        zero += !any;
    }
    CHECK(static_cast<double>(zero) / static_cast<double>(ds.samples.size()) > 0.9);
    CHECK(ds.meta.extra["fraction_active"].get<double>() < 0.1);
}

TEST_CASE("stored track windows") {
    const auto dir = std::filesystem::temp_directory_path() / ("coach_track_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    TrackGenConfig cfg;
    cfg.roster = default_roster(2, 5);
    cfg.laps = 1.0;
    cfg.seed = 5;
    cfg.labeled_fraction = 0.5;
    const Dataset ds = gen_track_dataset(circuit(), cfg);
    const std::string path = (dir / "t.jsonl").string();
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    REQUIRE(back.samples.size() == ds.samples.size());

    const RacelineRef ref(circuit());
    std::size_t labeled = 0;
    for (const auto& s : back.samples) {
        CHECK(s.kind == TaskKind::kTrack);
        REQUIRE(s.scenarios.size() == 1);
        const auto& sc = s.scenarios[0];
        CHECK(sc.past.states.size() == 40);
        CHECK(sc.future_gt->size() == 40);
        const auto m = compute_skill_metrics(sc, ref);
        CHECK(std::abs(m.steer_smoothness - s.skill_gt[0]) < 1e-9);
        CHECK(std::abs(m.raceline_dist - s.skill_gt[1]) < 1e-9);
        bool has_raceline = false;
        for (const auto& pl : sc.local_map.polylines) has_raceline |= pl.role == PolylineRole::kRaceline;
        CHECK(has_raceline);
        labeled += s.labeled();
    }
    CHECK(labeled == static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(ds.samples.size()))));

    // regeneration is byte-identical
    const std::string again = (dir / "u.jsonl").string();
    save_dataset(gen_track_dataset(circuit(), cfg), again);
    CHECK(read_file(path) == read_file(again));

    cfg.labeled_fraction = 0.0;
    for (const auto& s : gen_track_dataset(circuit(), cfg).samples) {
        CHECK_FALSE(s.labeled());
        CHECK(s.skill_gt.size() == 2);
    }
    cfg.roster.clear();
    CHECK_THROWS_AS(gen_track_dataset(circuit(), cfg), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("larger bias never lowers the stay_right frequency") {
    double prev = -1.0;
    for (double bias : {0.0, 0.5, 1.0, 2.0}) {
        StudentParams p;
        p.line_bias = bias;
        p.line_noise = 0.2;
        TrackGenConfig cfg;
        cfg.roster = {p};
        cfg.laps = 1.0;
        cfg.seed = 8;
        const Dataset ds = gen_track_dataset(circuit(), cfg);
        const double f = ds.meta.extra["label_frequency"]["stay_right"].get<double>();
        CHECK(f >= prev);
        prev = f;
    }
    CHECK(prev > 0.8);
}
