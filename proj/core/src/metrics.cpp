#include "ddpolab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddpolab/jacobi.hpp"

namespace ddpolab {

using nn::Tensor;

AprResult apr(const std::vector<Tensor>& samples, const nn::ModelParams& oracle,
              const AttributeVector& prompt, bool artifacts_only) {
  if (samples.empty()) throw std::invalid_argument("apr: no samples");
  if (!prompt.valid()) throw std::invalid_argument("apr: invalid prompt vector");
  AprResult out;
  out.prompt = prompt;
  out.n = static_cast<int>(samples.size());
  const int first_head = artifacts_only ? 2 : 0;
  for (const Tensor& img : samples) {
    const HeadReadout r = classify_image(oracle, img);
    bool match = true;
    for (int k = first_head; k < kNumAttributes; ++k) {
      if (r.predicted.bits[k] != prompt.bits[k]) {
        match = false;
        break;
      }
    }
    if (match) ++out.matches;
  }
  out.apr = static_cast<double>(out.matches) / static_cast<double>(out.n);
  return out;
}

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) {
    throw std::invalid_argument("fit_gaussian: need at least 2 samples, have " +
                                std::to_string(features.size()));
  }
  const int n = static_cast<int>(features.size());
  const int d = static_cast<int>(features[0].size());
  if (d < 1) throw std::invalid_argument("fit_gaussian: empty feature vectors");
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != d) {
      throw std::invalid_argument("fit_gaussian: ragged feature vectors");
    }
  }

  GaussianStats out;
  out.dim = d;
  out.n = n;
  out.mean.assign(d, 0.0);
  for (const auto& f : features) {
    for (int i = 0; i < d; ++i) out.mean[i] += f[i];
  }
  for (int i = 0; i < d; ++i) out.mean[i] /= n;

  out.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& f : features) {
    for (int i = 0; i < d; ++i) {
      const double ci = f[i] - out.mean[i];
      for (int j = i; j < d; ++j) {
        out.cov[i * d + j] += ci * (f[j] - out.mean[j]);
      }
    }
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double v = out.cov[i * d + j] / (n - 1);
      out.cov[i * d + j] = v;
      out.cov[j * d + i] = v;
    }
  }
  return out;
}

namespace {

void check_symmetric(const GaussianStats& g, const char* which) {
  const int d = g.dim;
  if (d < 1 || g.cov.size() != static_cast<std::size_t>(d) * d ||
      g.mean.size() != static_cast<std::size_t>(d)) {
    throw MetricError(MetricErrorKind::DimensionMismatch,
                      std::string("frechet_distance: malformed stats for ") + which);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (std::fabs(g.cov[i * d + j] - g.cov[j * d + i]) > 1e-6) {
        throw MetricError(MetricErrorKind::NotSymmetric,
                          std::string("frechet_distance: covariance of ") + which +
                              " is not symmetric");
      }
    }
  }
}

// eigenvalues in [-1e-6, 0) clamp to 0; anything lower is rejected
std::vector<double> clamped_eigenvalues(const std::vector<double>& m, int d,
                                        const char* context) {
  JacobiResult eig = jacobi_eigen(m, d);
  for (double& v : eig.values) {
    if (v < -1e-6) {
      throw MetricError(MetricErrorKind::Indefinite,
                        std::string("frechet_distance: ") + context +
                            " has eigenvalue " + std::to_string(v));
    }
    if (v < 0.0) v = 0.0;
  }
  return std::move(eig.values);
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int d) {
  std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
    }
  }
  return c;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check_symmetric(a, "a");
  check_symmetric(b, "b");
  if (a.dim != b.dim) {
    throw MetricError(MetricErrorKind::DimensionMismatch,
                      "frechet_distance: dimensions " + std::to_string(a.dim) + " vs " +
                          std::to_string(b.dim));
  }
  const int d = a.dim;

  // Sa^(1/2) from Sa's eigendecomposition
  JacobiResult ea = jacobi_eigen(a.cov, d);
  for (double& v : ea.values) {
    if (v < -1e-6) {
      throw MetricError(MetricErrorKind::Indefinite,
                        "frechet_distance: covariance of a has eigenvalue " +
                            std::to_string(v));
    }
    if (v < 0.0) v = 0.0;
  }
  std::vector<double> sqrt_a(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        s += ea.vectors[i * d + k] * std::sqrt(ea.values[k]) * ea.vectors[j * d + k];
      }
      sqrt_a[i * d + j] = s;
    }
  }

  // cross term from the symmetric product Sa^(1/2) Sb Sa^(1/2)
  std::vector<double> prod = matmul(matmul(sqrt_a, b.cov, d), sqrt_a, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (prod[i * d + j] + prod[j * d + i]);
      prod[i * d + j] = avg;
      prod[j * d + i] = avg;
    }
  }
  const std::vector<double> cross = clamped_eigenvalues(prod, d, "the cross product");

  double d2 = 0.0;
  for (int i = 0; i < d; ++i) {
    const double dm = a.mean[i] - b.mean[i];
    d2 += dm * dm + a.cov[i * d + i] + b.cov[i * d + i];
  }
  for (double v : cross) d2 -= 2.0 * std::sqrt(v);
  return std::max(0.0, d2);
}

double cfd(const std::vector<Tensor>& real_images, const std::vector<Tensor>& synth_images,
           const nn::ModelParams& oracle) {
  const std::size_t min_n = 33;  // must exceed the 32-dim feature space
  if (real_images.size() < min_n || synth_images.size() < min_n) {
    throw std::invalid_argument("cfd: need at least 33 images per set, have " +
                                std::to_string(real_images.size()) + " and " +
                                std::to_string(synth_images.size()));
  }
  auto features = [&](const std::vector<Tensor>& images) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const Tensor& img : images) {
      const Tensor f = nn::classifier_forward(oracle, img).features;
      std::vector<double> v(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i];
      out.push_back(std::move(v));
    }
    return out;
  };
  return frechet_distance(fit_gaussian(features(real_images)),
                          fit_gaussian(features(synth_images)));
}

std::vector<HeadReport> classification_report(const nn::ModelParams& clf, const Dataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("classification_report: empty dataset");
  std::vector<HeadReport> rows(kNumAttributes);
  for (int k = 0; k < kNumAttributes; ++k) rows[k].attribute = kAttributeNames[k];

  for (const ImageSample& s : data.samples) {
    const HeadReadout r = classify_image(clf, s.image);
    for (int k = 0; k < kNumAttributes; ++k) {
      const bool pred = r.predicted.bits[k] != 0;
      const bool truth = s.label.bits[k] != 0;
      if (pred && truth) ++rows[k].tp;
      else if (pred && !truth) ++rows[k].fp;
      else if (!pred && truth) ++rows[k].fn;
      else ++rows[k].tn;
    }
  }

  const double n = static_cast<double>(data.samples.size());
  for (HeadReport& r : rows) {
    r.precision = r.tp + r.fp > 0 ? r.tp / static_cast<double>(r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn > 0 ? r.tp / static_cast<double>(r.tp + r.fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    r.accuracy = (r.tp + r.tn) / n;
  }
  return rows;
}

std::vector<AugmentationCondition> augmentation_experiment(
    const Dataset& real_train, const Dataset& val, const std::vector<NamedSampleSet>& synth_sets,
    const Dataset& test, std::uint64_t seed, const ClassifierTrainConfig& cfg) {
  std::vector<AugmentationCondition> table;
  table.reserve(synth_sets.size() + 1);

  {
    const nn::ModelParams clf = train_classifier(real_train, val, seed, cfg);
    table.push_back({"real", classification_report(clf, test)});
  }
  for (const NamedSampleSet& set : synth_sets) {
    if (set.images.size() != set.labels.size()) {
      throw std::invalid_argument("augmentation_experiment: set \"" + set.name +
                                  "\" has mismatched images and labels");
    }
    Dataset combined = real_train;
    for (std::size_t i = 0; i < set.images.size(); ++i) {
      combined.samples.push_back({set.images[i], set.labels[i], 0});
    }
    const nn::ModelParams clf = train_classifier(combined, val, seed, cfg);
    table.push_back({set.name, classification_report(clf, test)});
  }
  return table;
}

void write_apr_csv(const std::string& path, const std::vector<AprResult>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "prompt,n,matches,apr\n";
  char buf[64];
  for (const AprResult& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%d,%d,%.9g\n", r.n, r.matches, r.apr);
    out << format_prompt(r.prompt) << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_report_csv(const std::string& path,
                      const std::vector<AugmentationCondition>& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "attribute,precision,recall,f1,accuracy,condition\n";
  char buf[128];
  for (const AugmentationCondition& cond : table) {
    for (const HeadReport& r : cond.report) {
      std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g,%.9g,", r.precision, r.recall, r.f1,
                    r.accuracy);
      out << r.attribute << buf << cond.condition << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string format_apr_table(const std::vector<AprResult>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-64s %6s %8s %8s\n", "prompt", "n", "matches", "apr");
  out << buf;
  for (const AprResult& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-64s %6d %8d %8.4f\n", format_prompt(r.prompt).c_str(),
                  r.n, r.matches, r.apr);
    out << buf;
  }
  return out.str();
}

std::string format_report_table(const std::vector<AugmentationCondition>& table) {
  std::ostringstream out;
  char buf[160];
  for (const AugmentationCondition& cond : table) {
    out << "condition: " << cond.condition << "\n";
    std::snprintf(buf, sizeof(buf), "  %-8s %9s %9s %9s %9s\n", "head", "precision", "recall",
                  "f1", "accuracy");
    out << buf;
    for (const HeadReport& r : cond.report) {
      std::snprintf(buf, sizeof(buf), "  %-8s %9.4f %9.4f %9.4f %9.4f\n", r.attribute.c_str(),
                    r.precision, r.recall, r.f1, r.accuracy);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace ddpolab
