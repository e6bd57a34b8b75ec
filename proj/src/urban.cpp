#include "coach/urban.hpp"

#include "coach/errors.hpp"
#include "coach/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coach {

void SkillVector2::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0) || alpha + beta > 1.0)
        throw ConfigError("skill vector needs alpha, beta in [0, 1] with alpha + beta <= 1");
}

void ManeuverFilterParams::validate() const {
    if (!(t_gap_aggressive < t_gap_conservative))
        throw ConfigError("t_gap_aggressive must be smaller than t_gap_conservative");
    if (!(decel_aggressive > 0.0)) throw ConfigError("decel_aggressive must be positive");
}

// ----------------------------------------------------------- classification

namespace {

std::vector<Vec2> ego_positions(const Scenario& sc) {
    std::vector<Vec2> out;
    for (const auto& s : sc.past.states) out.push_back(s.pos());
    if (sc.future_gt) out.insert(out.end(), sc.future_gt->begin(), sc.future_gt->end());
    return out;
}

std::vector<double> ego_speeds(const Scenario& sc) {
    std::vector<double> out;
    for (const auto& s : sc.past.states) out.push_back(s.v);
    const auto& m = *sc.maneuver;
    out.insert(out.end(), m.ego_future_v.begin(), m.ego_future_v.end());
    return out;
}

const ManeuverTrack& require_track(const Scenario& sc) {
    if (!sc.maneuver) throw DataError("scenario has no other-agent track");
    const auto& m = *sc.maneuver;
    const std::size_t n = sc.past.states.size() + (sc.future_gt ? sc.future_gt->size() : 0);
    if (m.other_xy.size() != n || m.other_v.size() != n)
        throw DataError("other-agent track length does not match the ego trajectory");
    if (m.ego_future_v.size() != (sc.future_gt ? sc.future_gt->size() : 0))
        throw DataError("ego future speeds do not match the future trajectory");
    return m;
}

}  // namespace

double min_time_gap(const Scenario& sc) {
    const auto& m = require_track(sc);
    const auto ego = ego_positions(sc);
    const auto ev = ego_speeds(sc);
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = ego.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t a = k + 1 < n ? k : k - 1;
        Vec2 u = m.other_xy[a + 1] - m.other_xy[a];
        const double len = norm(u);
        if (len < 1e-9) continue;
        u = (1.0 / len) * u;
        const Vec2 rel = ego[k] - m.other_xy[k];
        const double lon = dot(rel, u);
        const double lat = cross(u, rel);
        if (std::abs(lat) >= kLaneOverlap || std::abs(lon) > kSensingRange) continue;
        const double trailing_v = lon < 0 ? ev[k] : m.other_v[k];
        const double gap = std::max(0.0, std::abs(lon) - kCarLength) / std::max(0.5, trailing_v);
        best = std::min(best, gap);
    }
    return best;
}

double peak_decel(const Scenario& sc) {
    require_track(sc);
    const auto v = ego_speeds(sc);
    double peak = 0.0;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) peak = std::max(peak, (v[k] - v[k + 1]) / kDt);
    return peak;
}

Behavior classify_maneuver(const Scenario& sc, const ManeuverFilterParams& f) {
    const double gap = min_time_gap(sc);
    if (gap < f.t_gap_aggressive || peak_decel(sc) > f.decel_aggressive) return Behavior::kAggressive;
    if (gap > f.t_gap_conservative) return Behavior::kConservative;
    return Behavior::kNeither;
}

// --------------------------------------------------------------- simulation

namespace {

constexpr double kWheelbase = 2.7;
constexpr double kLaneWidth = 3.5;
constexpr double kRampY = -kLaneWidth;
constexpr double kRampEnd = 0.0;
constexpr double kMergeZoneStart = -70.0;
constexpr double kForcedMerge = -20.0;
constexpr double kAccelScale = 6.0;

struct DriverParams {
    double gap_accept;  ///< s
    double v_des;       ///< m/s
    double max_brake;   ///< m/s^2
    double max_accel;   ///< m/s^2
};

DriverParams draw_driver(Behavior c, Rng& rng) {
    switch (c) {
        case Behavior::kAggressive: return {uniform(rng, 0.3, 0.8), uniform(rng, 14.0, 18.0), 6.0, 3.0};
        case Behavior::kNeither: return {uniform(rng, 1.3, 2.1), uniform(rng, 11.0, 14.0), 3.0, 2.0};
        case Behavior::kConservative: return {uniform(rng, 2.9, 4.0), uniform(rng, 8.0, 11.0), 3.0, 1.5};
    }
    return {};
}

struct Car {
    double x, y, yaw, v, steer, accel;
};

void step_bicycle(Car& c, double a, double delta) {
    c.x += c.v * std::cos(c.yaw) * kDt;
    c.y += c.v * std::sin(c.yaw) * kDt;
    c.yaw = wrap_angle(c.yaw + c.v / kWheelbase * std::tan(delta) * kDt);
    c.v = std::max(0.0, c.v + a * kDt);
}

double pursuit_steer(const Car& c, double target_y) {
    const double ld = std::max(8.0, 1.0 * c.v);
    const State pose{0, c.x, c.y, c.yaw, c.v, 0, 0};
    const Vec2 p = to_ego({c.x + ld, target_y}, pose);
    const double d2 = p.x * p.x + p.y * p.y;
    return std::clamp(std::atan(2.0 * kWheelbase * p.y / d2), -0.5, 0.5);
}

std::vector<Polyline> merge_map() {
    auto line = [](PolylineRole role, int lane, double y, double x0, double x1) {
        Polyline p{role, lane, {}};
        for (double x = x0; x <= x1 + 1e-9; x += 10.0) p.pts.push_back({x, y});
        return p;
    };
    const double h = 0.5 * kLaneWidth;
    return {line(PolylineRole::kLeftEdge, 0, h, -300, 300), line(PolylineRole::kCenter, 0, 0.0, -300, 300),
            line(PolylineRole::kRightEdge, 0, -h, -300, 300), line(PolylineRole::kCenter, 1, kRampY, -300, kRampEnd),
            line(PolylineRole::kRightEdge, 1, kRampY - h, -300, kRampEnd)};
}

struct Sim {
    std::vector<Car> ego;
    std::vector<Car> other;
};

Sim simulate(const DriverParams& dp, double v_other, double offset, std::size_t steps) {
    Car e{kMergeZoneStart - dp.v_des * 1.0, kRampY, 0.0, dp.v_des, 0.0, 0.0};
    Car o{e.x + offset * v_other, 0.0, 0.0, v_other, 0.0, 0.0};
    bool merging = false;
    Sim sim;
    for (std::size_t k = 0; k < steps; ++k) {
        // controls for this step, recorded with the state they are applied from
        const double s = o.x - e.x;  // > 0: other ahead
        const double lat = std::abs(o.y - e.y);
        double a;
        if (!merging) {
            const double gap = s >= 0 ? (s - kCarLength) / std::max(0.5, e.v) : (-s - kCarLength) / std::max(0.5, o.v);
            const bool clear = std::abs(s) > kSensingRange || gap >= dp.gap_accept;
            if ((e.x >= kMergeZoneStart && clear) || e.x >= kForcedMerge) merging = true;
            if (!merging && !clear && e.x >= kMergeZoneStart - 30.0)
                a = 1.2 * ((o.v - 3.0) - e.v);  // drop back to slot in behind
            else
                a = 0.8 * (dp.v_des - e.v);
        }
        if (merging) {
            if (s > 0) {
                const double headway = (s - kCarLength) - dp.gap_accept * e.v;
                a = std::min(0.8 * (dp.v_des - e.v), 0.9 * (o.v - e.v) + 0.35 * headway);
            } else {
                a = 0.8 * (dp.v_des - e.v);
            }
        }
        a = std::clamp(a, -dp.max_brake, dp.max_accel);
        const double delta = pursuit_steer(e, merging ? 0.0 : kRampY);
        e.steer = delta;
        e.accel = std::clamp(a / kAccelScale, -1.0, 1.0);

        // the other car follows the ego once the ego is ahead in its lane
        double ao = 0.5 * (v_other - o.v);
        if (lat < kLaneOverlap && s < 0) {
            const double headway = (-s - kCarLength) - 1.2 * o.v;
            ao = std::min(ao, 0.9 * (e.v - o.v) + 0.35 * headway);
        }
        ao = std::clamp(ao, -5.0, 1.5);
        o.accel = std::clamp(ao / kAccelScale, -1.0, 1.0);

        sim.ego.push_back(e);
        sim.other.push_back(o);
        step_bicycle(e, a, delta);
        step_bicycle(o, ao, 0.0);
    }
    return sim;
}

State car_state(const Car& c, std::size_t k) { return {k * kDt, c.x, c.y, c.yaw, c.v, c.steer, c.accel}; }

State quantized(State s) {
    s.t = quantize(s.t);
    s.x = quantize(s.x);
    s.y = quantize(s.y);
    s.yaw = quantize(s.yaw);
    s.v = quantize(s.v);
    s.steer = quantize(s.steer);
    s.accel = quantize(s.accel);
    return s;
}

Vec2 quantized(Vec2 p, double q = 1e-4) { return {quantize(p.x, q), quantize(p.y, q)}; }

Scenario build_scenario(const Sim& sim, const UrbanConfig& cfg) {
    const std::size_t N = cfg.N, M = cfg.M;
    const State ref = car_state(sim.ego[N - 1], N - 1);
    Scenario sc;
    sc.past.frame = Frame::kEgo;
    for (std::size_t k = 0; k < N; ++k) {
        State s = car_state(sim.ego[k], k);
        const Vec2 p = to_ego(s.pos(), ref);
        s.x = p.x;
        s.y = p.y;
        s.yaw = wrap_angle(s.yaw - ref.yaw);
        sc.past.states.push_back(quantized(s));
    }
    std::vector<Vec2> fut;
    ManeuverTrack mt;
    for (std::size_t k = N; k < N + M; ++k) {
        fut.push_back(quantized(to_ego({sim.ego[k].x, sim.ego[k].y}, ref)));
        mt.ego_future_v.push_back(quantize(sim.ego[k].v));
    }
    for (std::size_t k = 0; k < N + M; ++k) {
        mt.other_xy.push_back(quantized(to_ego({sim.other[k].x, sim.other[k].y}, ref)));
        mt.other_v.push_back(quantize(sim.other[k].v));
    }
    sc.future_gt = std::move(fut);
    sc.maneuver = std::move(mt);
    const auto lines = merge_map();
    sc.local_map = extract_local_map(lines, ref, cfg.map_radius);
    for (auto& pl : sc.local_map.polylines)
        for (auto& p : pl.pts) p = quantized(p, 1e-5);
    sc.local_map.origin = quantized(ref);
    return sc;
}

}  // namespace

Scenario gen_scenario(Behavior category, std::uint64_t seed, const UrbanConfig& cfg) {
    cfg.filter.validate();
    if (cfg.N < 2 || cfg.M < 1) throw ConfigError("urban windows need N >= 2 and M >= 1");
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        const DriverParams dp = draw_driver(category, rng);
        const double v_other = uniform(rng, 10.0, 15.0);
        const double offset = uniform(rng, -3.0, 3.0);
        const Sim sim = simulate(dp, v_other, offset, cfg.N + cfg.M);
        Scenario sc = build_scenario(sim, cfg);
        if (classify_maneuver(sc, cfg.filter) == category) {
            sc.behavior_label = category;
            return sc;
        }
    }
    throw GenerationError(std::string("no '") + to_string(category) + "' maneuver after " +
                          std::to_string(cfg.max_attempts) + " attempts; filter thresholds look inconsistent");
}

// ------------------------------------------------------ sequences & actions

SequenceSample sample_sequence(const SkillVector2& sv, std::size_t P, std::uint64_t seed, const UrbanConfig& cfg) {
    sv.validate();
    if (P == 0) throw ConfigError("sequence length P must be positive");
    SequenceSample s;
    s.kind = TaskKind::kUrban;
    s.seed = seed;
    s.skill_vector = std::array<double, 2>{sv.alpha, sv.beta};
    double n_c = 0, n_a = 0;
    for (std::size_t i = 0; i < P; ++i) {
        Rng rng(derive_seed(seed, 2 * i));
        const double u = uniform(rng, 0.0, 1.0);
        const Behavior b = u < sv.alpha ? Behavior::kConservative
                           : u < sv.alpha + sv.beta ? Behavior::kAggressive
                                                    : Behavior::kNeither;
        if (b == Behavior::kConservative) n_c += 1;
        if (b == Behavior::kAggressive) n_a += 1;
        s.scenarios.push_back(gen_scenario(b, derive_seed(seed, 2 * i + 1), cfg));
    }
    s.skill_gt = {n_c, n_a};
    return s;
}

std::size_t label_action(Behavior b) {
    switch (b) {
        case Behavior::kAggressive: return 1;    // slow_down
        case Behavior::kConservative: return 2;  // speed_up
        case Behavior::kNeither: return 0;       // no_op
    }
    return 0;
}

std::size_t skill_action(Behavior last_label, const SkillVector2& sv, double deadband) {
    const std::size_t a_label = label_action(last_label);
    std::optional<Behavior> tendency;
    if (sv.alpha > sv.beta + deadband) tendency = Behavior::kConservative;
    if (sv.beta > sv.alpha + deadband) tendency = Behavior::kAggressive;
    if (!tendency || *tendency == last_label) return a_label;
    return 0;
}

std::size_t assign_teacher_action(const SequenceSample& seq, const SkillVector2& sv, double gamma,
                                  std::uint64_t seed, double deadband) {
    if (seq.scenarios.empty() || !seq.scenarios.back().behavior_label)
        throw DataError("sequence needs labeled scenarios to assign a teacher action");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
    const Behavior last = *seq.scenarios.back().behavior_label;
    Rng rng(seed);
    const bool use_skill = uniform(rng, 0.0, 1.0) < gamma;
    return use_skill ? skill_action(last, sv, deadband) : label_action(last);
}

Dataset gen_urban_dataset(const UrbanDatasetConfig& cfg) {
    if (cfg.labeled > cfg.K) throw ConfigError("labeled count exceeds dataset size");
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
    std::vector<std::size_t> order(cfg.K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split(derive_seed(cfg.seed, 0x5be11ull));
    std::shuffle(order.begin(), order.end(), split);
    std::vector<std::uint8_t> is_labeled(cfg.K, 0);
    for (std::size_t i = 0; i < cfg.labeled; ++i) is_labeled[order[i]] = 1;

    Dataset ds;
    ds.samples.reserve(cfg.K);
    for (std::size_t i = 0; i < cfg.K; ++i) {
        const std::uint64_t si = derive_seed(cfg.seed, i);
        Rng rng(si);
        SkillVector2 sv{uniform(rng, 0.0, 0.5), uniform(rng, 0.0, 0.5)};
        SequenceSample s = sample_sequence(sv, cfg.P, derive_seed(si, 1), cfg.scenario);
        s.id = "urban-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
        s.seed = si;
        s.gamma = cfg.gamma;
        if (is_labeled[i]) {
            const std::size_t a =
                assign_teacher_action(s, sv, cfg.gamma, derive_seed(si, 2), cfg.scenario.tendency_deadband);
            std::vector<std::uint8_t> t(kUrbanActions.size(), 0);
            t[a] = 1;
            s.teacher = std::move(t);
        }
        ds.samples.push_back(std::move(s));
    }
    const nlohmann::json config = {{"K", cfg.K},
                                   {"gamma", cfg.gamma},
                                   {"labeled", cfg.labeled},
                                   {"P", cfg.P},
                                   {"seed", cfg.seed},
                                   {"N", cfg.scenario.N},
                                   {"M", cfg.scenario.M},
                                   {"t_gap_aggressive", cfg.scenario.filter.t_gap_aggressive},
                                   {"t_gap_conservative", cfg.scenario.filter.t_gap_conservative},
                                   {"decel_aggressive", cfg.scenario.filter.decel_aggressive},
                                   {"tendency_deadband", cfg.scenario.tendency_deadband}};
    ds.meta = summarize(TaskKind::kUrban, ds.samples, config);
    return ds;
}

}  // namespace coach
