#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swt/core.hpp"
#include "swt/io.hpp"
#include "swt/metrics.hpp"
#include "swt/rng.hpp"
#include "swt/seg_lab.hpp"

namespace swt::drive {

// Crash severity tiers; the crash indicator is (tier + 1) / 4.
enum class Tier : int { S0 = 0, S1, S2, S3 };
inline double crash_value(Tier t) { return (static_cast<int>(t) + 1) / 4.0; }

enum class DoneReason { none, crash, offline, offroad, timeout, goal };

inline std::string to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none:
      return "none";
    case DoneReason::crash:
      return "crash";
    case DoneReason::offline:
      return "offline";
    case DoneReason::offroad:
      return "offroad";
    case DoneReason::timeout:
      return "timeout";
    case DoneReason::goal:
      return "goal";
  }
  return "none";
}

inline DoneReason parse_done_reason(std::string_view s) {
  for (auto r : {DoneReason::none, DoneReason::crash, DoneReason::offline, DoneReason::offroad, DoneReason::timeout,
                 DoneReason::goal}) {
    if (to_string(r) == s) return r;
  }
  fail("unknown done reason '", s, "'");
}

enum class Command : int { follow = 0, left, right };
inline constexpr int kCommandCount = 3;

struct Segment {
  double length = 0.0;
  double curvature = 0.0;  // 1/m, positive bends right
};

inline constexpr int kMaxEpisodeSteps = 500;

// Everything about the world that is not per-episode state. Distances in
// meters, speeds in meters per step.
struct TrackConfig {
  std::vector<Segment> segments = {{80, 0.0}, {60, 0.012}, {60, 0.0}, {50, -0.012}};
  double lane_width = 3.5;
  double shoulder = 0.0;       // drivable surface right of the lane
  double opposite_width = 3.5;  // oncoming lane left of ours
  double sidewalk_width = 2.5;
  double vehicle_length = 4.0;
  double vehicle_width = 1.8;
  double wheelbase = 2.5;
  double max_steer = 0.5;  // rad at |steer| = 1
  double accel = 0.08;
  double brake_decel = 0.06;
  double drag = 0.02;
  double v_init = 0.5;
  double v_min = 0.1;  // idle creep
  double v_max = 1.0;
  int max_steps = kMaxEpisodeSteps;
  int objects = 6;
  double inlane_probability = 0.15;
  int spawn_retries = 16;
  double fast_vehicle_speed = 0.6;  // ego speed above which vehicle contact is S2
  double reward_alpha = 1.0;
  double reward_beta = 1.0;
  double reward_psi = 10.0;
  int view_height = 16;
  int view_width = 16;
  int horizon_rows = 5;
  double view_near = 1.0;
  double view_far = 40.0;
  double view_span = 12.0;
  double render_noise = 0.25;
  double command_lookahead = 10.0;
  double step_seconds = 0.1;

  double length() const {
    double l = 0.0;
    for (const auto& s : segments) l += s.length;
    return l;
  }
  double road_right() const { return 0.5 * lane_width + shoulder; }
  double road_left() const { return -0.5 * lane_width - opposite_width; }

  void validate() const {
    require(!segments.empty(), "track needs at least one segment");
    for (std::size_t k = 0; k < segments.size(); ++k) {
      require(segments[k].length > 0.0 && std::isfinite(segments[k].curvature), "segment ", k,
              " needs positive length and finite curvature");
    }
    require(lane_width > 0 && vehicle_width > 0 && vehicle_length > 0 && wheelbase > 0, "track dimensions must be positive");
    require(shoulder >= 0 && opposite_width >= 0 && sidewalk_width >= 0, "road margins must be nonnegative");
    require(v_min >= 0 && v_min <= v_init && v_init <= v_max, "need 0 <= v_min <= v_init <= v_max");
    require(max_steps >= 1 && max_steps <= kMaxEpisodeSteps, "max_steps must lie in [1, ", kMaxEpisodeSteps, "]");
    require(objects >= 0 && spawn_retries >= 1, "bad object settings");
    require(inlane_probability >= 0 && inlane_probability <= 1, "inlane_probability must lie in [0, 1]");
    require(view_height > horizon_rows && horizon_rows >= 2 && view_width >= 2, "bad view size");
    require(view_near >= 0 && view_far > view_near && view_span > 0, "bad view range");
    require(step_seconds > 0, "step_seconds must be positive");
  }

  static std::string format_segments(const std::vector<Segment>& segs) {
    std::string out;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      if (k) out += ",";
      out += io::format_double(segs[k].length) + ":" + io::format_double(segs[k].curvature);
    }
    return out;
  }

  static std::vector<Segment> parse_segments(std::string_view text) {
    std::vector<Segment> segs;
    for (const auto& item : io::split(text, ',')) {
      const auto parts = io::split(item, ':');
      require(parts.size() == 2, "segment '", item, "' must look like length:curvature");
      const auto len = io::parse_double(parts[0]), kappa = io::parse_double(parts[1]);
      require(len && kappa, "segment '", item, "' has a non-numeric field");
      segs.push_back({*len, *kappa});
    }
    return segs;
  }

  struct DoubleField {
    const char* key;
    double TrackConfig::*field;
  };
  struct IntField {
    const char* key;
    int TrackConfig::*field;
  };
  static constexpr std::array<DoubleField, 25> kDoubleFields = {{
      {"lane_width", &TrackConfig::lane_width},
      {"shoulder", &TrackConfig::shoulder},
      {"opposite_width", &TrackConfig::opposite_width},
      {"sidewalk_width", &TrackConfig::sidewalk_width},
      {"vehicle_length", &TrackConfig::vehicle_length},
      {"vehicle_width", &TrackConfig::vehicle_width},
      {"wheelbase", &TrackConfig::wheelbase},
      {"max_steer", &TrackConfig::max_steer},
      {"accel", &TrackConfig::accel},
      {"brake_decel", &TrackConfig::brake_decel},
      {"drag", &TrackConfig::drag},
      {"v_init", &TrackConfig::v_init},
      {"v_min", &TrackConfig::v_min},
      {"v_max", &TrackConfig::v_max},
      {"inlane_probability", &TrackConfig::inlane_probability},
      {"fast_vehicle_speed", &TrackConfig::fast_vehicle_speed},
      {"reward_alpha", &TrackConfig::reward_alpha},
      {"reward_beta", &TrackConfig::reward_beta},
      {"reward_psi", &TrackConfig::reward_psi},
      {"view_near", &TrackConfig::view_near},
      {"view_far", &TrackConfig::view_far},
      {"view_span", &TrackConfig::view_span},
      {"render_noise", &TrackConfig::render_noise},
      {"command_lookahead", &TrackConfig::command_lookahead},
      {"step_seconds", &TrackConfig::step_seconds},
  }};
  static constexpr std::array<IntField, 6> kIntFields = {{
      {"max_steps", &TrackConfig::max_steps},
      {"objects", &TrackConfig::objects},
      {"spawn_retries", &TrackConfig::spawn_retries},
      {"view_height", &TrackConfig::view_height},
      {"view_width", &TrackConfig::view_width},
      {"horizon_rows", &TrackConfig::horizon_rows},
  }};

  // Unknown keys are rejected so that typos do not silently fall back to
  // defaults.
  static TrackConfig from_config(const io::Config& c) {
    TrackConfig t;
    for (const auto& [key, value] : c.values()) {
      const auto match = [&](const auto& f) { return key == f.key; };
      const bool known = key == "segments" || std::any_of(kDoubleFields.begin(), kDoubleFields.end(), match) ||
                         std::any_of(kIntFields.begin(), kIntFields.end(), match);
      require(known, "unknown track config key '", key, "'");
    }
    if (c.has("segments")) t.segments = parse_segments(c.get_string("segments"));
    for (const auto& f : kDoubleFields) t.*f.field = c.get_double(f.key, t.*f.field);
    for (const auto& f : kIntFields) t.*f.field = static_cast<int>(c.get_int(f.key, t.*f.field));
    t.validate();
    return t;
  }

  io::Config to_config() const {
    io::Config c;
    c.set("segments", format_segments(segments));
    for (const auto& f : kDoubleFields) c.set(f.key, io::format_double(this->*f.field));
    for (const auto& f : kIntFields) c.set(f.key, std::to_string(this->*f.field));
    return c;
  }
};

struct Action {
  double steer = 0.0;
  double throttle = 0.0;
  double brake = 0.0;

  Action clamped() const {
    auto fix = [](double v, double lo, double hi) { return std::isfinite(v) ? std::clamp(v, lo, hi) : 0.0; };
    return {fix(steer, -1.0, 1.0), fix(throttle, 0.0, 1.0), fix(brake, 0.0, 1.0)};
  }
};

// An obstacle in track coordinates: s along the centerline, d lateral
// (positive to the right), axis-aligned extent.
struct WorldObject {
  int cls = seg::person;
  double s = 0.0;
  double d = 0.0;
  double length = 0.0;
  double width = 0.0;
};

inline std::array<double, 2> object_extent(int cls) {
  switch (cls) {
    case seg::person:
      return {0.6, 0.6};
    case seg::bike:
      return {1.8, 0.6};
    case seg::car:
      return {4.0, 1.8};
    case seg::bus:
      return {10.0, 2.5};
    default:
      fail("class ", cls, " cannot be placed as an object");
  }
}

// Person S3; vehicles S2 when the ego is fast, else S1; anything else S0.
inline Tier object_tier(int cls, double ego_speed, double fast_speed) {
  if (cls == seg::person) return Tier::S3;
  if (cls == seg::car || cls == seg::bus) return ego_speed > fast_speed ? Tier::S2 : Tier::S1;
  return Tier::S0;
}

struct WorldState {
  std::uint64_t seed = 0;
  double s = 0.0;
  double d = 0.0;
  double heading = 0.0;  // relative to the track tangent, positive to the right
  double speed = 0.0;
  int step = 0;
  double damage = 0.0;
  double distance = 0.0;  // meters driven along the track
  std::vector<WorldObject> objects;
  DoneReason done = DoneReason::none;
  // Latent history for observation stacking.
  Vector latent_current;
  Vector latent_previous;
  int latent_step = -1;
};

struct StepOutcome {
  double reward = 0.0;
  double o_l = 0.0;
  double o_r = 0.0;
  double c = 0.0;
  int hit_class = -1;
  DoneReason done = DoneReason::none;
  double progress = 0.0;  // meters along the track this step
};

inline double curvature_at(const TrackConfig& cfg, double s) {
  double start = 0.0;
  for (const auto& seg : cfg.segments) {
    if (s < start + seg.length) return seg.curvature;
    start += seg.length;
  }
  return cfg.segments.back().curvature;
}

inline Command command_at(const TrackConfig& cfg, double s) {
  const double k = curvature_at(cfg, s + cfg.command_lookahead);
  if (k > 1e-9) return Command::right;
  if (k < -1e-9) return Command::left;
  return Command::follow;
}

inline double lane_offset_ratio(const TrackConfig& cfg, double d) {
  return std::min(1.0, std::fabs(d) / (0.5 * cfg.lane_width));
}

// Lateral fraction of the vehicle body outside the drivable surface.
inline double offroad_fraction(const TrackConfig& cfg, double d) {
  const double lo = d - 0.5 * cfg.vehicle_width, hi = d + 0.5 * cfg.vehicle_width;
  const double inside = std::max(0.0, std::min(hi, cfg.road_right()) - std::max(lo, cfg.road_left()));
  return std::clamp(1.0 - inside / cfg.vehicle_width, 0.0, 1.0);
}

namespace detail {

inline bool overlaps(double s0, double d0, double l0, double w0, double s1, double d1, double l1, double w1,
                     double margin = 0.0) {
  return std::fabs(s0 - s1) < 0.5 * (l0 + l1) + margin && std::fabs(d0 - d1) < 0.5 * (w0 + w1) + margin;
}

inline std::vector<WorldObject> place_objects(const TrackConfig& cfg, Rng& rng) {
  std::vector<WorldObject> objs;
  const double lo = std::min(40.0, 0.5 * cfg.length()), hi = std::max(lo, cfg.length() - 20.0);
  for (int k = 0; k < cfg.objects; ++k) {
    const double u = uniform01(rng);
    const int cls = u < 0.3 ? seg::person : u < 0.6 ? seg::car : u < 0.7 ? seg::bus : seg::bike;
    const auto ext = object_extent(cls);
    WorldObject o{cls, uniform(rng, lo, hi), 0.0, ext[0], ext[1]};
    if (uniform01(rng) < cfg.inlane_probability) {
      o.d = uniform(rng, -0.3, 0.3) * cfg.lane_width;
    } else if (cls == seg::car || cls == seg::bus) {
      o.d = cfg.road_left() + 0.5 * cfg.opposite_width + uniform(rng, -0.3, 0.3);
    } else {
      const double off = uniform(rng, 0.3, std::max(0.4, cfg.sidewalk_width - 0.3));
      o.d = uniform01(rng) < 0.7 ? cfg.road_right() + off : cfg.road_left() - off;
    }
    objs.push_back(o);
  }
  return objs;
}

inline bool spawn_ok(const TrackConfig& cfg, const std::vector<WorldObject>& objs) {
  for (std::size_t a = 0; a < objs.size(); ++a) {
    if (overlaps(objs[a].s, objs[a].d, objs[a].length, objs[a].width, 0.0, 0.0, cfg.vehicle_length + 20.0,
                 cfg.vehicle_width)) {
      return false;
    }
    for (std::size_t b = a + 1; b < objs.size(); ++b) {
      if (overlaps(objs[a].s, objs[a].d, objs[a].length, objs[a].width, objs[b].s, objs[b].d, objs[b].length,
                   objs[b].width, 1.0)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace detail

// Vehicle centered in its lane at the track start; objects drawn from the
// seed, redrawn from derived seeds when they overlap.
inline WorldState reset(std::uint64_t seed, const TrackConfig& cfg) {
  cfg.validate();
  WorldState st;
  st.seed = seed;
  st.speed = cfg.v_init;
  for (int attempt = 0; attempt < cfg.spawn_retries; ++attempt) {
    Rng rng = substream(seed, "spawn", static_cast<std::uint64_t>(attempt));
    auto objs = detail::place_objects(cfg, rng);
    if (detail::spawn_ok(cfg, objs)) {
      st.objects = std::move(objs);
      return st;
    }
  }
  fail("could not place ", cfg.objects, " non-overlapping objects after ", cfg.spawn_retries, " attempts (seed ", seed,
       ")");
}

// r = 1 - alpha o_l - beta o_r - psi c, evaluated in this exact order.
inline double reward(const TrackConfig& cfg, double o_l, double o_r, double c) {
  return 1.0 - cfg.reward_alpha * o_l - cfg.reward_beta * o_r - cfg.reward_psi * c;
}

// One kinematic bicycle step in the track frame. Termination priority when
// several conditions fire together: crash, offroad, offline, goal, timeout.
inline StepOutcome step(WorldState& st, const TrackConfig& cfg, const Action& raw) {
  require(st.done == DoneReason::none, "episode already finished (", to_string(st.done), ")");
  const Action a = raw.clamped();
  StepOutcome out;

  st.speed += cfg.accel * a.throttle - cfg.brake_decel * a.brake - cfg.drag * st.speed;
  st.speed = std::clamp(st.speed, cfg.v_min, cfg.v_max);
  const double kappa = curvature_at(cfg, st.s);
  st.heading += st.speed * std::tan(cfg.max_steer * a.steer) / cfg.wheelbase - kappa * st.speed;
  st.heading = std::remainder(st.heading, 2.0 * std::numbers::pi);
  const double scale = std::max(0.1, 1.0 - kappa * st.d);
  const double ds = st.speed * std::cos(st.heading) / scale;
  st.s += ds;
  st.d += st.speed * std::sin(st.heading);
  st.distance += std::max(0.0, ds);
  out.progress = ds;
  ++st.step;

  out.o_l = lane_offset_ratio(cfg, st.d);
  out.o_r = offroad_fraction(cfg, st.d);
  const WorldObject* hit = nullptr;
  for (const auto& o : st.objects) {
    if (detail::overlaps(st.s, st.d, cfg.vehicle_length, cfg.vehicle_width, o.s, o.d, o.length, o.width)) {
      if (!hit || static_cast<int>(object_tier(o.cls, st.speed, cfg.fast_vehicle_speed)) >
                      static_cast<int>(object_tier(hit->cls, st.speed, cfg.fast_vehicle_speed))) {
        hit = &o;
      }
    }
  }
  if (hit) {
    out.c = crash_value(object_tier(hit->cls, st.speed, cfg.fast_vehicle_speed));
    out.hit_class = hit->cls;
    st.damage += out.c;
  }
  out.reward = reward(cfg, out.o_l, out.o_r, out.c);

  if (out.c > 0.0) {
    out.done = DoneReason::crash;
  } else if (out.o_r >= 0.5) {
    out.done = DoneReason::offroad;
  } else if (out.o_l >= 1.0) {
    out.done = DoneReason::offline;
  } else if (st.s >= cfg.length()) {
    out.done = DoneReason::goal;
  } else if (st.step >= cfg.max_steps) {
    out.done = DoneReason::timeout;
  }
  st.done = out.done;
  return out;
}

namespace detail {

// Ground class at track coordinates (s ignored: the road is uniform along s).
inline int ground_class(const TrackConfig& cfg, double d) {
  if (d <= cfg.road_right() && d >= cfg.road_left()) return seg::road;
  if (d <= cfg.road_right() + cfg.sidewalk_width && d >= cfg.road_left() - cfg.sidewalk_width) return seg::sidewalk;
  return seg::building;
}

}  // namespace detail

// Top rows show sky then buildings; each ground row covers a band of forward
// distance (far at the top, spacing growing quadratically) and each column a
// band of lateral offset in the vehicle frame. A pixel takes the class of any
// object intersecting its cell, else the ground class at the cell center.
inline seg::SceneSample render_front_view(const WorldState& st, const TrackConfig& cfg) {
  const int h = cfg.view_height, w = cfg.view_width, hz = cfg.horizon_rows;
  seg::SceneSample out;
  out.height = h;
  out.width = w;
  out.seed = st.seed;
  out.labels.assign(static_cast<std::size_t>(h * w), seg::road);
  const int ground_rows = h - hz;
  auto forward_at = [&](double t) {  // t in [0,1], 0 = nearest
    return cfg.view_near + (cfg.view_far - cfg.view_near) * t * t;
  };
  const double kappa = curvature_at(cfg, st.s);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int cls;
      if (r < hz) {
        cls = r < (hz + 1) / 2 ? seg::sky : seg::building;
      } else {
        const int g = h - 1 - r;  // 0 = bottom row
        const double f_lo = forward_at(static_cast<double>(g) / ground_rows);
        const double f_hi = forward_at(static_cast<double>(g + 1) / ground_rows);
        const double lat_lo = (static_cast<double>(c) / w - 0.5) * cfg.view_span;
        const double lat_hi = (static_cast<double>(c + 1) / w - 0.5) * cfg.view_span;
        const double fc = 0.5 * (f_lo + f_hi);
        // Lateral track offset of a point straight ahead at distance f.
        auto drift = [&](double f) { return st.d + f * std::sin(st.heading) + 0.5 * kappa * f * f; };
        cls = detail::ground_class(cfg, drift(fc) + 0.5 * (lat_lo + lat_hi));
        int best_tier = -1;
        for (const auto& o : st.objects) {
          const double s_lo = st.s + f_lo, s_hi = st.s + f_hi;
          if (o.s + 0.5 * o.length < s_lo || o.s - 0.5 * o.length > s_hi) continue;
          const double d_near = std::min(drift(f_lo), drift(f_hi)), d_far = std::max(drift(f_lo), drift(f_hi));
          if (o.d + 0.5 * o.width < d_near + lat_lo || o.d - 0.5 * o.width > d_far + lat_hi) continue;
          const int tier = static_cast<int>(object_tier(o.cls, 0.0, 1.0));
          if (tier > best_tier) {
            best_tier = tier;
            cls = o.cls;
          }
        }
      }
      out.labels[static_cast<std::size_t>(r * w + c)] = cls;
    }
  }
  Rng rng = substream(st.seed, "render", static_cast<std::uint64_t>(st.step));
  out.features = seg::paint_features(out.labels, cfg.render_noise, {}, rng);
  return out;
}

struct Observation {
  Vector latent;        // current then previous pooled latent grid
  Vector measurements;  // speed, goal distance (fraction of track), damage, one-hot command
};

inline constexpr int kLatentPool = 4;
inline constexpr int kMeasurementCount = 3 + kCommandCount;

inline int latent_size(const seg::SoftmaxModel& segmenter) {
  return kLatentPool * kLatentPool * segmenter.penultimate_dim();
}

// Average-pools the segmenter's penultimate activations over a
// kLatentPool x kLatentPool grid of the rendered view.
inline Vector pooled_latent(const seg::SceneSample& view, const seg::SoftmaxModel& segmenter) {
  const Matrix act = segmenter.penultimate(view.features);
  const int ch = static_cast<int>(act.cols());
  Vector out = Vector::Zero(kLatentPool * kLatentPool * ch);
  std::vector<int> counts(static_cast<std::size_t>(kLatentPool * kLatentPool), 0);
  for (int r = 0; r < view.height; ++r) {
    for (int c = 0; c < view.width; ++c) {
      const int cell = (r * kLatentPool / view.height) * kLatentPool + c * kLatentPool / view.width;
      out.segment(cell * ch, ch) += act.row(r * view.width + c).transpose();
      ++counts[static_cast<std::size_t>(cell)];
    }
  }
  for (int cell = 0; cell < kLatentPool * kLatentPool; ++cell) {
    if (counts[static_cast<std::size_t>(cell)] > 0) out.segment(cell * ch, ch) /= counts[static_cast<std::size_t>(cell)];
  }
  return out;
}

inline Vector measurements(const WorldState& st, const TrackConfig& cfg) {
  Vector m = Vector::Zero(kMeasurementCount);
  m[0] = st.speed;
  m[1] = std::max(0.0, cfg.length() - st.s) / cfg.length();
  m[2] = st.damage;
  m[3 + static_cast<int>(command_at(cfg, st.s))] = 1.0;
  return m;
}

// Renders, runs the segmenter and stacks the latent with the one from the
// previous step (duplicated at the first observation of an episode).
// The rendered view is copied to `view_out` when given.
inline Observation observe(WorldState& st, const TrackConfig& cfg, const seg::SoftmaxModel& segmenter,
                           seg::SceneSample* view_out = nullptr) {
  require(segmenter.feature_dim() == seg::kFeatureDim, "segmenter expects ", segmenter.feature_dim(),
          " features per pixel, the renderer produces ", seg::kFeatureDim);
  require(segmenter.classes() == seg::kNumClasses, "segmenter predicts ", segmenter.classes(), " classes, expected ",
          seg::kNumClasses);
  if (view_out) *view_out = render_front_view(st, cfg);
  if (st.latent_step != st.step) {
    const Vector now = pooled_latent(view_out ? *view_out : render_front_view(st, cfg), segmenter);
    if (st.latent_step == st.step - 1 && st.latent_current.size() == now.size()) {
      st.latent_previous = std::move(st.latent_current);
    } else {
      st.latent_previous = now;
    }
    st.latent_current = now;
    st.latent_step = st.step;
  }
  Observation o;
  o.latent.resize(st.latent_current.size() * 2);
  o.latent << st.latent_current, st.latent_previous;
  o.measurements = measurements(st, cfg);
  return o;
}

// One logged step of an episode.
struct StepRecord {
  int t = 0;  // step index after the transition (1-based)
  Action action;
  StepOutcome outcome;
  double s = 0.0;
  double d = 0.0;
  double speed = 0.0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  j["action"] = {r.action.steer, r.action.throttle, r.action.brake};
  j["r"] = r.outcome.reward;
  j["o_l"] = r.outcome.o_l;
  j["o_r"] = r.outcome.o_r;
  j["c"] = r.outcome.c;
  j["hit"] = r.outcome.hit_class >= 0 ? nlohmann::json(seg::class_names()[static_cast<std::size_t>(r.outcome.hit_class)])
                                      : nlohmann::json(nullptr);
  j["done"] = r.outcome.done == DoneReason::none ? nlohmann::json(nullptr) : nlohmann::json(to_string(r.outcome.done));
  j["progress"] = r.outcome.progress;
  j["s"] = r.s;
  j["d"] = r.d;
  j["speed"] = r.speed;
  return j;
}

inline std::string to_jsonl(std::span<const StepRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<StepRecord> parse_jsonl(std::string_view text) {
  std::vector<StepRecord> out;
  int line_no = 0;
  for (const auto& line : io::split(text, '\n')) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StepRecord r;
      r.t = j.at("t").get<int>();
      const auto& a = j.at("action");
      r.action = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
      r.outcome.reward = j.at("r").get<double>();
      r.outcome.o_l = j.at("o_l").get<double>();
      r.outcome.o_r = j.at("o_r").get<double>();
      r.outcome.c = j.at("c").get<double>();
      r.outcome.hit_class = -1;
      if (!j.at("hit").is_null()) {
        const auto name = j.at("hit").get<std::string>();
        const auto& names = seg::class_names();
        const auto it = std::find(names.begin(), names.end(), name);
        require(it != names.end(), "unknown class '", name, "'");
        r.outcome.hit_class = static_cast<int>(it - names.begin());
      }
      r.outcome.done = j.at("done").is_null() ? DoneReason::none : parse_done_reason(j.at("done").get<std::string>());
      r.outcome.progress = j.value("progress", 0.0);
      r.s = j.value("s", 0.0);
      r.d = j.value("d", 0.0);
      r.speed = j.value("speed", 0.0);
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      fail("episode log line ", line_no, ": ", e.what());
    } catch (const Error& e) {
      fail("episode log line ", line_no, ": ", e.what());
    }
  }
  return out;
}

// Splits a flat step log into episodes at terminal steps.
inline std::vector<std::vector<StepRecord>> split_episodes(std::span<const StepRecord> records) {
  std::vector<std::vector<StepRecord>> eps(1);
  for (const auto& r : records) {
    eps.back().push_back(r);
    if (r.outcome.done != DoneReason::none) eps.emplace_back();
  }
  if (eps.back().empty()) eps.pop_back();
  return eps;
}

// Infractions are counted on rising edges: off-line when o_l first reaches
// the threshold, off-road when o_r becomes positive, collisions by the class
// that was hit.
inline DrivingRecord to_driving_record(std::span<const StepRecord> episode, double offline_threshold = 0.3) {
  DrivingRecord rec;
  double meters = 0.0;
  bool was_off_line = false, was_off_road = false;
  for (const auto& r : episode) {
    meters += std::max(0.0, r.outcome.progress);
    const double km = meters / 1000.0;
    const bool off_line = r.outcome.o_l >= offline_threshold;
    const bool off_road = r.outcome.o_r > 0.0;
    if (off_line && !was_off_line) rec.events.push_back({InfractionType::off_line, r.t, km});
    if (off_road && !was_off_road) rec.events.push_back({InfractionType::off_road, r.t, km});
    was_off_line = off_line;
    was_off_road = off_road;
    if (r.outcome.c > 0.0) {
      const auto type = r.outcome.hit_class == seg::person                                    ? InfractionType::collision_person
                        : (r.outcome.hit_class == seg::car || r.outcome.hit_class == seg::bus) ? InfractionType::collision_car
                                                                                                : InfractionType::collision_static;
      rec.events.push_back({type, r.t, km});
    }
    if (r.outcome.done == DoneReason::goal) rec.reached_goal = true;
  }
  rec.steps = static_cast<int>(episode.size());
  rec.distance_km = meters / 1000.0;
  return rec;
}

}  // namespace swt::drive
