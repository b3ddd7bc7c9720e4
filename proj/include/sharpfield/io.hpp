#pragma once
#include <cstdint>
#include <optional>
#include <string>

#include "sharpfield/geom.hpp"

namespace sharpfield {

/// Seed + config-hash stamp embedded in artifact headers (`# seed=.. config=..`
/// comment lines in text formats, fixed trailer in binary ones).
struct ArtifactStamp {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Optional `# mollifier rho=<v> scale=<v>` header of FG files carrying a
/// serialized feature set.
struct FgHeader {
  std::optional<double> rho;
  std::optional<double> scale;
  std::optional<ArtifactStamp> stamp;
};

TriMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const TriMesh& m,
              const ArtifactStamp* stamp = nullptr);

PointCloud load_xyz(const std::string& path);
void save_xyz(const std::string& path, const PointCloud& c,
              const ArtifactStamp* stamp = nullptr);

FeatureGraph load_fg(const std::string& path, FgHeader* header = nullptr);
void save_fg(const std::string& path, const FeatureGraph& g,
             const FgHeader* header = nullptr);

/// Shortest decimal form that parses back to the same double bit pattern.
std::string format_double(double x);

}  // namespace sharpfield
