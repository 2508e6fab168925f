#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "inrbo/config_space.hpp"
#include "inrbo/inr.hpp"
#include "inrbo/numerics.hpp"

namespace inrbo {

enum class Modality { kImage, kAudio, kOccupancy };
std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view name);

/// A sampled signal: coordinates (N x d) and values (N x m).
///   image:     coords in [-1,1]^2 at pixel centres, values in [0,1]
///   audio:     coords evenly spaced over [-100,100], values in [-1,1]
///   occupancy: coords at voxel centres in [-1,1]^3, values in {0,1}
struct SignalDataset {
  Modality modality = Modality::kImage;
  DenseMatrix coords;
  DenseMatrix targets;
  double coord_low = -1.0;
  double coord_high = 1.0;
  std::vector<std::size_t> shape;  // {H, W, C}, {samples}, or {R, R, R}

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
};

/// PNG (8-bit gray or RGB) or PGM/PPM (P2, P3, P5, P6). Images larger than
/// max_side are reduced by integer-factor box averaging.
SignalDataset load_image(const std::string& path, std::size_t max_side);

/// RIFF WAV with 16-bit PCM samples; channels are averaged to mono and the
/// signal is truncated to max_samples.
SignalDataset load_audio_wav(const std::string& path, std::size_t max_samples);

/// Analytic solid centred at the origin.
struct OccupancyShape {
  enum class Kind { kSphere, kTorus, kUnion };
  Kind kind = Kind::kSphere;
  double radius = 0.5;  // sphere
  double major = 0.5;   // torus ring radius (around the z axis)
  double minor = 0.2;   // torus tube radius

  static OccupancyShape sphere(double radius);
  static OccupancyShape torus(double major, double minor);
  /// Sphere of `radius` together with a torus of (major, minor).
  static OccupancyShape union_of(double radius, double major, double minor);

  bool contains(double x, double y, double z) const;
};

nlohmann::json occupancy_to_json(const OccupancyShape& shape);
OccupancyShape occupancy_from_json(const nlohmann::json& doc);

/// Voxel-centre samples of the shape on an R^3 grid (1 <= R <= 64).
SignalDataset make_occupancy(const OccupancyShape& shape, std::size_t resolution);

/// 10 log10(peak^2 / MSE), capped at 100 dB once MSE < peak^2 * 1e-10.
double psnr(const DenseMatrix& pred, const DenseMatrix& target, double peak);

/// |pred >= threshold AND target| / |pred >= threshold OR target|; 1 when
/// both sets are empty. Target entries count as occupied when >= 0.5.
double iou(const DenseMatrix& pred, const DenseMatrix& target, double threshold = 0.5);

enum class Metric { kPsnr, kIou };
std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view name);
Metric metric_for(Modality m);
/// Score assigned to diverged trainings: -10 dB or IoU 0.
double floor_score(Metric m);

struct Score {
  double value = 0.0;
  Metric metric = Metric::kPsnr;
  bool diverged = false;
};

/// Everything besides the configuration that a trial needs.
struct ObjectiveSettings {
  Modality modality = Modality::kImage;
  std::size_t epochs = 500;
  std::size_t batch = 0;  // 0: full batch
  std::size_t width = 64;
  std::size_t pe_bands = 4;
  std::optional<double> output_init_halfwidth;  // default: 1e-4 for audio, else the fan-in rule
  double divergence_limit = 1e6;                // training loss above this counts as divergence
  int workers = 1;
};

struct Evaluation {
  Score score;
  TrainReport report;
};

/// Trains an INR for config on the dataset and scores its reconstruction.
/// Divergence is reported through the floor score, never as an exception.
/// Throws ModalityMismatch when the dataset is not of settings.modality.
Evaluation evaluate_objective(const Configuration& config, const SignalDataset& dataset,
                              const ObjectiveSettings& settings, std::uint64_t seed);

}  // namespace inrbo
