#include "coach/track_data.hpp"

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coach {

void StudentParams::validate() const {
    if (!(speed_scale > 0.0 && speed_scale <= 1.5)) throw ConfigError("speed_scale must be in (0, 1.5]");
    if (line_noise < 0.0 || steer_noise < 0.0 || brake_delay < 0.0)
        throw ConfigError("student noise and delay must be non-negative");
}

nlohmann::json student_to_json(const StudentParams& p) {
    return {{"line_bias", p.line_bias},
            {"line_noise", p.line_noise},
            {"speed_scale", p.speed_scale},
            {"brake_delay", p.brake_delay},
            {"steer_noise", p.steer_noise}};
}

StudentParams student_from_json(const nlohmann::json& j) {
    StudentParams p;
    p.line_bias = j.value("line_bias", 0.0);
    p.line_noise = j.value("line_noise", 0.0);
    p.speed_scale = j.value("speed_scale", 1.0);
    p.brake_delay = j.value("brake_delay", 0.0);
    p.steer_noise = j.value("steer_noise", 0.0);
    p.validate();
    return p;
}

// -------------------------------------------------------------- RacelineRef

RacelineRef::RacelineRef(const TrackModel& track, double corner_kappa) {
    if (!track.has_raceline() || track.race_speeds.size() != track.raceline.size())
        throw DataError("track '" + track.name + "' has no raceline with speeds");
    pts_ = track.raceline;
    speeds_ = track.race_speeds;
    closed_ = track.closed;
    cum_ = cumulative_arc_length(pts_);
    kappa_ = menger_curvature(pts_, closed_);
    const std::size_t n = pts_.size();
    const std::size_t m = closed_ ? n - 1 : n;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t prev = i == 0 ? (closed_ ? m - 1 : 0) : i - 1;
        if (i == 0 && !closed_) continue;
        if (std::abs(kappa_[i]) > corner_kappa && std::abs(kappa_[prev]) <= corner_kappa) entries_.push_back(cum_[i]);
    }
}

double RacelineRef::wrap(double s) const {
    const double L = length();
    if (!closed_) return std::clamp(s, 0.0, L);
    s = std::fmod(s, L);
    return s < 0 ? s + L : s;
}

std::size_t RacelineRef::segment(double s) const {
    s = wrap(s);
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    const std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
    return std::min(i, pts_.size() - 2);
}

Projection RacelineRef::project(Vec2 p) const { return arc_length_project(pts_, p, closed_); }

Projection RacelineRef::project_near(Vec2 p, std::size_t hint) const {
    return arc_length_project_near(pts_, cum_, p, hint, 40, closed_);
}

double RacelineRef::speed_at(double s) const {
    s = wrap(s);
    const std::size_t i = segment(s);
    const double len = cum_[i + 1] - cum_[i];
    const double u = len > 0 ? std::clamp((s - cum_[i]) / len, 0.0, 1.0) : 0.0;
    return speeds_[i] + u * (speeds_[i + 1] - speeds_[i]);
}

bool RacelineRef::decelerating_at(double s) const {
    const std::size_t i = segment(s);
    return speeds_[i + 1] < speeds_[i];
}

double RacelineRef::curvature_at(double s) const { return kappa_[segment(s)]; }

Vec2 RacelineRef::point(double s) const { return point_at(pts_, cum_, wrap(s), closed_); }

Vec2 RacelineRef::normal(double s) const {
    const std::size_t i = segment(s);
    const Vec2 t = pts_[i + 1] - pts_[i];
    const double len = norm(t);
    return len > 0 ? Vec2{-t.y / len, t.x / len} : Vec2{0, 1};
}

// --------------------------------------------------------------- simulation

namespace {

constexpr double kWheelbase = 2.7;
constexpr double kOuTau = 3.0;
constexpr double kAccelScale = 6.0;

double signed_progress(double from, double to, double L, bool closed) {
    double d = to - from;
    if (closed) {
        if (d > 0.5 * L) d -= L;
        if (d < -0.5 * L) d += L;
    }
    return d;
}

}  // namespace

Trajectory simulate_student(const TrackModel& track, const StudentParams& sp, double laps, std::uint64_t seed) {
    sp.validate();
    if (!(laps > 0.0)) throw ConfigError("laps must be positive");
    const RacelineRef ref(track);
    const double L = ref.length();
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vec2 pos = ref.point(0.0) + sp.line_bias * ref.normal(0.0);
    const Vec2 t0 = ref.point(1.0) - ref.point(0.0);
    double yaw = std::atan2(t0.y, t0.x);
    double v = sp.speed_scale * ref.speed_at(0.0);
    double ou = 0.0;
    std::size_t hint = 0;
    double prev_s = 0.0, travelled = 0.0;
    const double goal = ref.closed() ? laps * L : L - 1.0;
    const std::size_t max_steps = static_cast<std::size_t>(goal / 0.5 / kDt) + 100;

    Trajectory traj;
    traj.frame = Frame::kWorld;
    for (std::size_t k = 0; k < max_steps && travelled < goal; ++k) {
        const Projection pr = ref.project_near(pos, hint);
        hint = pr.segment;
        if (k > 0) travelled += signed_progress(prev_s, pr.s, L, ref.closed());
        prev_s = pr.s;

        ou += -ou / kOuTau * kDt + sp.line_noise * std::sqrt(2.0 * kDt / kOuTau) * gauss(rng);
        const double offset = sp.line_bias + ou;
        const double ld = std::max(5.0, 0.35 * v);
        const double st = pr.s + ld;
        const Vec2 target = ref.point(st) + offset * ref.normal(st);
        const State pose{0, pos.x, pos.y, yaw, v, 0, 0};
        const Vec2 p = to_ego(target, pose);
        double delta = std::atan(2.0 * kWheelbase * p.y / (p.x * p.x + p.y * p.y));
        if (sp.steer_noise > 0) delta += sp.steer_noise * gauss(rng);
        delta = std::clamp(delta, -0.6, 0.6);

        const double v_target = sp.speed_scale * ref.speed_at(pr.s + v * (0.5 - sp.brake_delay));
        const double a = std::clamp(2.0 * (v_target - v), -8.0, 5.0);

        traj.states.push_back({quantize(k * kDt), pos.x, pos.y, yaw, v, delta, std::clamp(a / kAccelScale, -1.0, 1.0)});
        pos = pos + v * kDt * Vec2{std::cos(yaw), std::sin(yaw)};
        yaw = wrap_angle(yaw + v / kWheelbase * std::tan(delta) * kDt);
        v = std::max(0.0, v + a * kDt);
    }
    return traj;
}

// ------------------------------------------------------------------ oracle

std::optional<std::vector<std::uint8_t>> oracle_instructions(std::span<const State> future, const RacelineRef& ref,
                                                             const OracleParams& op) {
    std::vector<std::uint8_t> y(kTrackActions.size(), 0);
    if (future.empty()) return y;
    const double L = ref.length();
    double prev_s = 0.0;
    for (std::size_t k = 0; k < future.size(); ++k) {
        const State& s = future[k];
        const Projection pr = ref.project(s.pos());
        if (std::abs(pr.d) > op.max_offtrack) return std::nullopt;
        const double vt = ref.speed_at(pr.s);
        if (ref.decelerating_at(pr.s)) {
            if (s.v > (1.0 + op.brake_over) * vt) y[0] = 1;
        } else if (s.v < (1.0 - op.accel_under) * vt) {
            y[1] = 1;
        }
        if (pr.d < -op.lateral_band) y[2] = 1;
        if (pr.d > op.lateral_band) y[3] = 1;
        if (k > 0) {
            const double step = signed_progress(prev_s, pr.s, L, ref.closed());
            if (step > 0)
                for (double e : ref.corner_entries()) {
                    double ahead = e - prev_s;
                    if (ref.closed() && ahead < 0) ahead += L;
                    if (ahead > 0 && ahead <= step) y[4] = 1;
                }
        }
        prev_s = pr.s;
    }
    return y;
}

TrackSkillVector compute_skill_metrics(std::span<const State> past, const RacelineRef& ref) {
    if (past.size() < 2) throw ContractViolation("skill metrics need at least two states");
    TrackSkillVector out;
    for (std::size_t i = 0; i + 1 < past.size(); ++i) {
        const double rate = (past[i + 1].steer - past[i].steer) / kDt;
        out.steer_smoothness += rate * rate;
    }
    out.steer_smoothness /= static_cast<double>(past.size() - 1);
    for (const auto& s : past) out.raceline_dist += std::abs(ref.project(s.pos()).d);
    out.raceline_dist /= static_cast<double>(past.size());
    return out;
}

TrackSkillVector compute_skill_metrics(const Scenario& sc, const RacelineRef& ref) {
    std::vector<State> world = sc.past.states;
    for (auto& s : world) {
        const Vec2 p = from_ego(s.pos(), sc.local_map.origin);
        s.x = p.x;
        s.y = p.y;
    }
    return compute_skill_metrics(world, ref);
}

// ----------------------------------------------------------------- dataset

std::vector<StudentParams> default_roster(std::size_t n, std::uint64_t seed) {
    static constexpr double kScales[] = {0.75, 0.9, 1.0, 1.0, 1.15};
    std::vector<StudentParams> out;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        StudentParams p;
        p.line_bias = uniform(rng, -1.6, 1.6);
        p.line_noise = uniform(rng, 0.1, 0.6);
        p.speed_scale = kScales[i % std::size(kScales)];  // every roster of 5+ covers all paces
        p.brake_delay = uniform(rng, 0.0, 1.2);
        p.steer_noise = uniform(rng, 0.0, 0.01);
        out.push_back(p);
    }
    return out;
}

namespace {

State quantized_state(State s) {
    s.t = quantize(s.t);
    s.x = quantize(s.x);
    s.y = quantize(s.y);
    s.yaw = quantize(s.yaw);
    s.v = quantize(s.v);
    s.steer = quantize(s.steer);
    s.accel = quantize(s.accel);
    return s;
}

}  // namespace

Scenario make_track_scenario(std::span<const State> past, const TrackModel& track, double map_radius) {
    if (past.empty()) throw ContractViolation("empty past window");
    const State origin = quantized_state(past.back());
    Scenario sc;
    sc.past.frame = Frame::kEgo;
    for (State s : past) {
        const Vec2 p = to_ego(s.pos(), origin);
        s.x = p.x;
        s.y = p.y;
        s.yaw = wrap_angle(s.yaw - origin.yaw);
        sc.past.states.push_back(quantized_state(s));
    }
    sc.local_map = extract_local_map(track, origin, map_radius);
    for (auto& pl : sc.local_map.polylines)
        for (auto& p : pl.pts) p = {quantize(p.x, 1e-5), quantize(p.y, 1e-5)};
    sc.local_map.origin = origin;
    return sc;
}

Dataset gen_track_dataset(const TrackModel& track, const TrackGenConfig& cfg) {
    if (cfg.roster.empty()) throw ConfigError("student roster is empty");
    if (!(cfg.labeled_fraction >= 0.0 && cfg.labeled_fraction <= 1.0))
        throw ConfigError("labeled_fraction must be in [0, 1]");
    if (cfg.stride == 0 || cfg.N < 2 || cfg.M < 1) throw ConfigError("invalid window configuration");
    const RacelineRef ref(track, cfg.oracle.corner_kappa);

    Dataset ds;
    std::size_t discarded = 0;
    nlohmann::json roster = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.roster.size(); ++i) {
        roster.push_back(student_to_json(cfg.roster[i]));
        const std::uint64_t si = derive_seed(cfg.seed, i);
        const Trajectory traj = simulate_student(track, cfg.roster[i], cfg.laps, si);
        const auto& st = traj.states;
        std::size_t w_index = 0;
        for (std::size_t w = 0; w + cfg.N + cfg.M <= st.size(); w += cfg.stride, ++w_index) {
            const std::span<const State> future(st.data() + w + cfg.N, cfg.M);
            auto labels = oracle_instructions(future, ref, cfg.oracle);
            if (!labels) {
                ++discarded;
                continue;
            }
            Scenario sc = make_track_scenario(std::span(st.data() + w, cfg.N), track, cfg.map_radius);
            const State& origin = sc.local_map.origin;
            std::vector<Vec2> fut;
            for (const auto& s : future) {
                const Vec2 p = to_ego(s.pos(), origin);
                fut.push_back({quantize(p.x), quantize(p.y)});
            }
            sc.future_gt = std::move(fut);

            SequenceSample s;
            s.kind = TaskKind::kTrack;
            s.id = "track-" + std::to_string(cfg.seed) + "-" + std::to_string(i) + "-" + std::to_string(w_index);
            s.seed = si;
            const TrackSkillVector skill = compute_skill_metrics(sc, ref);
            s.skill_gt = {skill.steer_smoothness, skill.raceline_dist};
            s.teacher = std::move(labels);  // trimmed to the labeled split below
            s.scenarios.push_back(std::move(sc));
            ds.samples.push_back(std::move(s));
        }
    }
    if (discarded > 0)
        log_warn(std::to_string(discarded) + " window(s) discarded: car more than " +
                 std::to_string(cfg.oracle.max_offtrack) + " m off the raceline");

    // fraction of windows with any active category, over all windows
    std::vector<double> freq(kTrackActions.size(), 0.0);
    double active = 0.0;
    for (const auto& s : ds.samples) {
        bool any = false;
        for (std::size_t c = 0; c < freq.size(); ++c) {
            freq[c] += (*s.teacher)[c];
            any |= (*s.teacher)[c] != 0;
        }
        active += any;
    }
    const double n = std::max<double>(1.0, static_cast<double>(ds.samples.size()));
    for (auto& f : freq) f /= n;
    nlohmann::json freq_by_name = nlohmann::json::object();
    for (std::size_t c = 0; c < freq.size(); ++c) freq_by_name[std::string(kTrackActions[c])] = freq[c];

    std::vector<std::size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split(derive_seed(cfg.seed, 0x1abe1ull));
    std::shuffle(order.begin(), order.end(), split);
    const auto n_labeled = static_cast<std::size_t>(std::llround(cfg.labeled_fraction * static_cast<double>(order.size())));
    for (std::size_t i = n_labeled; i < order.size(); ++i) ds.samples[order[i]].teacher.reset();

    const nlohmann::json config = {{"track", track.name},
                                   {"laps", cfg.laps},
                                   {"labeled_fraction", cfg.labeled_fraction},
                                   {"seed", cfg.seed},
                                   {"N", cfg.N},
                                   {"M", cfg.M},
                                   {"stride", cfg.stride},
                                   {"map_radius", cfg.map_radius},
                                   {"roster", roster},
                                   {"oracle",
                                    {{"brake_over", cfg.oracle.brake_over},
                                     {"accel_under", cfg.oracle.accel_under},
                                     {"lateral_band", cfg.oracle.lateral_band},
                                     {"corner_kappa", cfg.oracle.corner_kappa},
                                     {"max_offtrack", cfg.oracle.max_offtrack}}}};
    const nlohmann::json extra = {{"windows", ds.samples.size()},
                                  {"discarded", discarded},
                                  {"fraction_active", active / n},
                                  {"label_frequency", freq_by_name}};
    ds.meta = summarize(TaskKind::kTrack, ds.samples, config, extra);
    return ds;
}

}  // namespace coach
