#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddpolab/dataset.hpp"
#include "ddpolab/reward.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab {

struct AprResult {
  AttributeVector prompt;
  int n = 0;
  int matches = 0;
  double apr = 0.0;  // matches / n
};

// A sample matches iff the thresholded predictions on all six heads equal
// the prompt bits. artifacts_only restricts the equality to the four
// artifact heads. Match counting is pure integer arithmetic.
AprResult apr(const std::vector<nn::Tensor>& samples, const nn::ModelParams& oracle,
              const AttributeVector& prompt, bool artifacts_only = false);

struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> cov;  // row-major dim x dim, symmetric
  int dim = 0;
  int n = 0;
};

// Sample mean and unbiased (n-1) covariance, symmetrized. Throws below two
// samples or on ragged input.
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

enum class MetricErrorKind { NotSymmetric, DimensionMismatch, Indefinite };

class MetricError : public std::runtime_error {
 public:
  MetricError(MetricErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  MetricErrorKind kind() const { return kind_; }

 private:
  MetricErrorKind kind_;
};

// d^2 = |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the cross term
// from the eigenvalues of Sa^(1/2) Sb Sa^(1/2). Eigenvalues in [-1e-6, 0)
// clamp to zero; below that the covariance is rejected as indefinite.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Frechet distance between classifier-feature Gaussians of the two image
// sets. Both sets need more images than the feature dimension (>= 33).
double cfd(const std::vector<nn::Tensor>& real_images,
           const std::vector<nn::Tensor>& synth_images, const nn::ModelParams& oracle);

struct HeadReport {
  std::string attribute;
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;  // 0 by convention when precision + recall == 0
  double accuracy = 0.0;
};

// One row per head, each computed independently of the others.
std::vector<HeadReport> classification_report(const nn::ModelParams& clf, const Dataset& data);

struct NamedSampleSet {
  std::string name;
  std::vector<nn::Tensor> images;
  std::vector<AttributeVector> labels;
};

struct AugmentationCondition {
  std::string condition;  // "real" for the baseline, else the synth set name
  std::vector<HeadReport> report;
};

// Trains one fresh classifier per condition ({real only} plus {real + each
// synth set}) with identical seed and config, then reports each on `test`.
std::vector<AugmentationCondition> augmentation_experiment(
    const Dataset& real_train, const Dataset& val, const std::vector<NamedSampleSet>& synth_sets,
    const Dataset& test, std::uint64_t seed, const ClassifierTrainConfig& cfg = {});

// apr.csv: "prompt,n,matches,apr"
void write_apr_csv(const std::string& path, const std::vector<AprResult>& rows);

// report.csv: "attribute,precision,recall,f1,accuracy,condition"
void write_report_csv(const std::string& path,
                      const std::vector<AugmentationCondition>& table);

std::string format_apr_table(const std::vector<AprResult>& rows);
std::string format_report_table(const std::vector<AugmentationCondition>& table);

}  // namespace ddpolab
