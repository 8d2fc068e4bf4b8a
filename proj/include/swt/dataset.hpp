#pragma once

// On-disk toy datasets: one plain PGM label grid and one feature CSV per
// scene, plus a key=value manifest listing every scene's seed.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "swt/io.hpp"
#include "swt/rng.hpp"
#include "swt/seg_lab.hpp"

namespace swt::dataset {

inline constexpr const char* kManifest = "manifest.txt";

inline std::string scene_name(const std::string& split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return split + "_" + buf;
}

inline void write_scene(const std::filesystem::path& dir, const std::string& name, const seg::SceneSample& s) {
  io::LabelGrid g{s.height, s.width, s.labels};
  io::write_text(dir / (name + ".pgm"), io::format_pgm(g, seg::kNumClasses - 1));
  io::write_csv_table(dir / (name + ".csv"), s.features);
}

inline seg::SceneSample read_scene(const std::filesystem::path& dir, const std::string& name, std::uint64_t seed) {
  const auto pgm = dir / (name + ".pgm");
  const auto g = io::parse_pgm(io::read_text(pgm), pgm.string());
  seg::SceneSample s;
  s.height = g.height;
  s.width = g.width;
  s.labels = g.labels;
  s.seed = seed;
  for (int v : s.labels) require(v < seg::kNumClasses, pgm.string(), ": label ", v, " out of range");
  s.features = io::read_csv_table(dir / (name + ".csv"));
  require(s.features.rows() == s.pixels() && s.features.cols() == seg::kFeatureDim, name,
          ".csv: expected ", s.pixels(), "x", seg::kFeatureDim, " features, found ", s.features.rows(), "x",
          s.features.cols());
  return s;
}

inline std::string format_shift(const std::array<double, seg::kFeatureDim>& shift) {
  std::string out;
  for (std::size_t k = 0; k < shift.size(); ++k) out += (k ? "," : "") + io::format_double(shift[k]);
  return out;
}

inline std::array<double, seg::kFeatureDim> parse_shift(const std::string& text, const std::string& key) {
  const auto parts = io::split(text, ',');
  require(parts.size() == seg::kFeatureDim, "'", key, "' needs ", seg::kFeatureDim, " comma-separated values");
  std::array<double, seg::kFeatureDim> out{};
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = io::parse_double(parts[k]);
    require(v.has_value(), "'", key, "' has a non-numeric entry '", parts[k], "'");
    out[k] = *v;
  }
  return out;
}

struct SplitSpec {
  std::string name;
  int count = 0;
  seg::SceneConfig scene;
};

// Scene seeds come from the dataset seed and the split name, so adding a
// split never changes the scenes of another.
inline io::Config generate(const std::filesystem::path& dir, std::uint64_t seed, const std::vector<SplitSpec>& splits) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), "cannot create output directory ", dir.string());
  io::Config manifest;
  manifest.set("seed", std::to_string(seed));
  for (const auto& sp : splits) {
    require(sp.count >= 0, "split '", sp.name, "' has a negative count");
    const auto& cfg = sp.scene;
    const auto key = [&](const char* field) { return sp.name + "." + field; };
    manifest.set(key("count"), std::to_string(sp.count));
    manifest.set(key("height"), std::to_string(cfg.height));
    manifest.set(key("width"), std::to_string(cfg.width));
    manifest.set(key("objects_min"), std::to_string(cfg.objects_min));
    manifest.set(key("objects_max"), std::to_string(cfg.objects_max));
    manifest.set(key("noise"), io::format_double(cfg.noise));
    manifest.set(key("shift"), format_shift(cfg.shift));
    for (int k = 0; k < sp.count; ++k) {
      const auto scene_seed = derive_seed(seed, "scene-" + sp.name, static_cast<std::uint64_t>(k));
      const auto name = scene_name(sp.name, k);
      write_scene(dir, name, seg::generate_scene(scene_seed, cfg));
      manifest.set(sp.name + "." + name, std::to_string(scene_seed));
    }
  }
  io::write_text(dir / kManifest, manifest.to_text());
  return manifest;
}

inline std::uint64_t parse_seed(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, err] = std::from_chars(text.data(), end, v);
  require(err == std::errc() && ptr == end && !text.empty(), "'", key, "' is not an unsigned integer: '", text, "'");
  return v;
}

inline std::vector<seg::SceneSample> load_split(const std::filesystem::path& dir, const std::string& split) {
  const auto mpath = dir / kManifest;
  require(std::filesystem::exists(mpath), "dataset manifest ", mpath.string(), " not found");
  const auto manifest = io::Config::load(mpath);
  require(manifest.has(split + ".count"), mpath.string(), " has no split '", split, "'");
  const auto count = manifest.get_int(split + ".count");
  std::vector<seg::SceneSample> out;
  for (int k = 0; k < count; ++k) {
    const auto name = scene_name(split, k);
    const auto key = split + "." + name;
    require(manifest.has(key), mpath.string(), " is missing '", key, "'");
    out.push_back(read_scene(dir, name, parse_seed(manifest.get_string(key), key)));
  }
  return out;
}

}  // namespace swt::dataset
