#include "inrbo/objectives.hpp"

#include <cmath>
#include <limits>

#include "inrbo/errors.hpp"

namespace inrbo {
namespace {

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": prediction is " + std::to_string(a.rows()) + "x" +
                                                   std::to_string(a.cols()) + ", target is " +
                                                   std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

double peak_for(Modality m) { return m == Modality::kAudio ? 2.0 : 1.0; }

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kImage: return "image";
    case Modality::kAudio: return "audio";
    case Modality::kOccupancy: return "occupancy";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view name) {
  for (Modality m : {Modality::kImage, Modality::kAudio, Modality::kOccupancy}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

std::string_view to_string(Metric m) { return m == Metric::kPsnr ? "psnr" : "iou"; }

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "psnr") return Metric::kPsnr;
  if (name == "iou") return Metric::kIou;
  return std::nullopt;
}

Metric metric_for(Modality m) { return m == Modality::kOccupancy ? Metric::kIou : Metric::kPsnr; }

double floor_score(Metric m) { return m == Metric::kPsnr ? -10.0 : 0.0; }

double psnr(const DenseMatrix& pred, const DenseMatrix& target, double peak) {
  require_same_shape(pred, target, "psnr");
  if (!(peak > 0.0)) throw Error(ErrorCode::kInvalidArgument, "psnr peak must be positive");
  if (pred.size() == 0) throw Error(ErrorCode::kDimensionMismatch, "psnr of empty signals");
  const DenseMatrix sq = (pred - target).array().square();
  const double mse = pairwise_sum({sq.data(), static_cast<std::size_t>(sq.size())}) / static_cast<double>(sq.size());
  const double peak2 = peak * peak;
  if (!(mse >= peak2 * 1e-10)) return std::isnan(mse) ? std::numeric_limits<double>::quiet_NaN() : 100.0;
  return std::min(100.0, 10.0 * std::log10(peak2 / mse));
}

double iou(const DenseMatrix& pred, const DenseMatrix& target, double threshold) {
  require_same_shape(pred, target, "iou");
  std::size_t inter = 0, uni = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] >= threshold;
    const bool t = target.data()[i] >= 0.5;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Evaluation evaluate_objective(const Configuration& config, const SignalDataset& dataset,
                              const ObjectiveSettings& settings, std::uint64_t seed) {
  if (dataset.modality != settings.modality) {
    throw Error(ErrorCode::kModalityMismatch, "dataset is " + std::string(to_string(dataset.modality)) +
                                                  " but the objective expects " +
                                                  std::string(to_string(settings.modality)));
  }
  NetworkShape shape;
  shape.input_dim = static_cast<std::size_t>(dataset.coords.cols());
  shape.output_dim = static_cast<std::size_t>(dataset.targets.cols());
  shape.width = settings.width;
  shape.pe_bands = settings.pe_bands;
  shape.output_init_halfwidth = settings.output_init_halfwidth;
  if (!shape.output_init_halfwidth && settings.modality == Modality::kAudio) shape.output_init_halfwidth = 1e-4;
  const NetworkSpec spec = make_network_spec(config, shape);

  TrainOptions opt;
  opt.epochs = settings.epochs;
  opt.batch = settings.batch;
  opt.workers = settings.workers;
  opt.divergence_limit = settings.divergence_limit;
  SeededRng rng(seed);
  TrainResult trained = train(spec, dataset.coords, dataset.targets, opt, rng);

  const Metric metric = metric_for(dataset.modality);
  Evaluation ev{{floor_score(metric), metric, true}, std::move(trained.report)};
  if (ev.report.diverged) return ev;
  try {
    const DenseMatrix pred = forward(spec, trained.state, dataset.coords);
    const double value = metric == Metric::kPsnr ? psnr(pred, dataset.targets, peak_for(dataset.modality))
                                                 : iou(pred, dataset.targets);
    if (std::isfinite(value)) ev.score = {value, metric, false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFiniteActivation) throw;
  }
  if (ev.score.diverged) ev.report.diverged = true;
  return ev;
}

}  // namespace inrbo
