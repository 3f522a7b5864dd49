#include "sgldvr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgldvr/errors.hpp"
#include "sgldvr/rng.hpp"

namespace sgldvr {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// max |sigmoid''| = 1/(6 sqrt(3)), attained where sigmoid = (3 +- sqrt(3))/6.
constexpr double kSigmoidSecondDerivBound = 0.09622504486493764;

}  // namespace

FiniteSumObjective::FiniteSumObjective(std::size_t n, std::size_t d) : n_(n), d_(d) {
  if (n == 0 || d == 0) throw ConfigError("objective needs n >= 1 and d >= 1");
}

double FiniteSumObjective::full_value(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += component_value(i, x);
  return s / static_cast<double>(n_);
}

void FiniteSumObjective::full_gradient(std::span<const double> x, Vec& out) const {
  out.assign(d_, 0.0);
  Vec g(d_);
  for (std::size_t i = 0; i < n_; ++i) {
    component_gradient(i, x, g);
    axpy(1.0, g, out);
  }
  scale(out, 1.0 / static_cast<double>(n_));
}

void FiniteSumObjective::hessian_vec(std::span<const double>, std::span<const double>,
                                     Vec&) const {
  throw ConfigError("objective does not provide a Hessian-vector product");
}

// ---------------------------------------------------------------------------
// Quadratic bowl

namespace {

class QuadraticObjective final : public FiniteSumObjective {
 public:
  QuadraticObjective(std::size_t d, double scale)
      : FiniteSumObjective(d, d), scale_(scale) {}

  double component_value(std::size_t i, std::span<const double> x) const override {
    const double nd = static_cast<double>(n_);
    return scale_ * nd * x[i] * x[i];
  }

  void component_gradient(std::size_t i, std::span<const double> x,
                          Vec& out) const override {
    out.assign(d_, 0.0);
    out[i] = 2.0 * scale_ * static_cast<double>(n_) * x[i];
  }

  double full_value(std::span<const double> x) const override {
    return scale_ * norm_sq(x);
  }

  void full_gradient(std::span<const double> x, Vec& out) const override {
    out.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) out[j] = 2.0 * scale_ * x[j];
  }

  bool has_hessian_vec() const override { return true; }
  void hessian_vec(std::span<const double>, std::span<const double> v,
                   Vec& out) const override {
    out.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) out[j] = 2.0 * scale_ * v[j];
  }

 private:
  double scale_;
};

}  // namespace

ObjectiveBundle make_quadratic(std::size_t d, double scale) {
  if (d == 0) throw ConfigError("make_quadratic: dimension must be >= 1");
  if (scale <= 0.0) throw ConfigError("make_quadratic: scale must be positive");
  ObjectiveBundle bundle;
  bundle.objective = std::make_shared<QuadraticObjective>(d, scale);
  bundle.meta.grad_lipschitz = 2.0 * scale * static_cast<double>(d);
  bundle.meta.hessian_lipschitz = 0.0;
  bundle.meta.reg_mu1 = 4.0 * scale;
  bundle.meta.reg_psi1 = 0.0;
  bundle.meta.reg_mu2 = 1.0 / scale;
  bundle.meta.reg_psi2 = 0.0;
  bundle.meta.known_min_value = 0.0;
  bundle.id = "quadratic(d=" + std::to_string(d) + ",scale=" + std::to_string(scale) + ")";
  return bundle;
}

// ---------------------------------------------------------------------------
// Strict-saddle quadratic

namespace {

class SaddleQuadratic final : public FiniteSumObjective {
 public:
  SaddleQuadratic(std::size_t d, double neg_eig, double pos_eig)
      : FiniteSumObjective(d, d), neg_(neg_eig), pos_(pos_eig) {}

  double eigenvalue(std::size_t j) const { return j == 0 ? -neg_ : pos_; }

  double component_value(std::size_t i, std::span<const double> x) const override {
    const double nd = static_cast<double>(n_);
    return 0.5 * nd * eigenvalue(i) * x[i] * x[i];
  }

  void component_gradient(std::size_t i, std::span<const double> x,
                          Vec& out) const override {
    out.assign(d_, 0.0);
    out[i] = static_cast<double>(n_) * eigenvalue(i) * x[i];
  }

  double full_value(std::span<const double> x) const override {
    double s = 0.0;
    for (std::size_t j = 0; j < d_; ++j) s += eigenvalue(j) * x[j] * x[j];
    return 0.5 * s;
  }

  void full_gradient(std::span<const double> x, Vec& out) const override {
    out.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) out[j] = eigenvalue(j) * x[j];
  }

  bool has_hessian_vec() const override { return true; }
  void hessian_vec(std::span<const double>, std::span<const double> v,
                   Vec& out) const override {
    out.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) out[j] = eigenvalue(j) * v[j];
  }

 private:
  double neg_;
  double pos_;
};

}  // namespace

ObjectiveBundle make_saddle_quadratic(std::size_t d, double neg_eig, double pos_eig) {
  if (d < 2) throw ConfigError("make_saddle_quadratic: dimension must be >= 2");
  if (neg_eig <= 0.0 || pos_eig <= 0.0)
    throw ConfigError("make_saddle_quadratic: eigenvalues must be positive");
  ObjectiveBundle bundle;
  bundle.objective = std::make_shared<SaddleQuadratic>(d, neg_eig, pos_eig);
  bundle.meta.grad_lipschitz = std::max(neg_eig, pos_eig);
  bundle.meta.hessian_lipschitz = 0.0;
  bundle.meta.strict_saddle_q = std::min(neg_eig, pos_eig);
  bundle.meta.known_fsp_list.emplace_back(Vec(d, 0.0), -neg_eig);
  bundle.id = "saddle(d=" + std::to_string(d) + ",neg=" + std::to_string(neg_eig) +
              ",pos=" + std::to_string(pos_eig) + ")";
  return bundle;
}

// ---------------------------------------------------------------------------
// Single-neuron sigmoid layer with Tikhonov regularization

namespace {

class SigmoidNetObjective final : public FiniteSumObjective {
 public:
  SigmoidNetObjective(Matrix A, double gamma, double offset)
      : FiniteSumObjective(A.rows, A.cols), A_(std::move(A)), gamma_(gamma),
        offset_(offset) {}

  double component_value(std::size_t i, std::span<const double> x) const override {
    const double m = static_cast<double>(n_);
    return m * sigmoid(dot(A_.row(i), x)) + gamma_ * norm_sq(x) + offset_;
  }

  void component_gradient(std::size_t i, std::span<const double> x,
                          Vec& out) const override {
    const double m = static_cast<double>(n_);
    const double s = sigmoid(dot(A_.row(i), x));
    const double w = m * s * (1.0 - s);
    out.resize(d_);
    auto row = A_.row(i);
    for (std::size_t j = 0; j < d_; ++j) out[j] = w * row[j] + 2.0 * gamma_ * x[j];
  }

 private:
  Matrix A_;
  double gamma_;
  double offset_;
};

}  // namespace

ObjectiveBundle make_sigmoid_net(const Matrix& A, double tikhonov_gamma,
                                 double offset_C) {
  if (tikhonov_gamma <= 0.0)
    throw ConfigError("make_sigmoid_net: regularizer must be positive (coercivity)");
  if (A.rows == 0 || A.cols == 0)
    throw ConfigError("make_sigmoid_net: A must be nonempty");

  ObjectiveBundle bundle;
  bundle.objective =
      std::make_shared<SigmoidNetObjective>(A, tikhonov_gamma, offset_C);

  double max_row_sq = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i)
    max_row_sq = std::max(max_row_sq, norm_sq(A.row(i)));
  const double m = static_cast<double>(A.rows);
  bundle.meta.grad_lipschitz =
      m * kSigmoidSecondDerivBound * max_row_sq + 2.0 * tikhonov_gamma;

  // mu2/psi2 come from gamma-dominance; mu1/psi1 are fitted, not derived.
  bundle.meta.reg_mu2 = 1.0 / tikhonov_gamma;
  bundle.meta.reg_psi2 = std::max(0.0, -offset_C) / tikhonov_gamma;
  const double mu1 = 2.0 * tikhonov_gamma;
  bundle.meta.reg_mu1 = mu1;
  bundle.meta.reg_psi1 =
      fit_regularization_psi1(*bundle.objective, mu1, 4.0, 1000, 0x51677u);
  bundle.meta.regularization_is_empirical = true;
  bundle.meta.check_box_halfwidth = 4.0;
  bundle.id = "sigmoid_net(m=" + std::to_string(A.rows) + ",d=" +
              std::to_string(A.cols) + ")";
  return bundle;
}

// ---------------------------------------------------------------------------
// Synthetic binary classification

void Dataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open dataset file for writing: " + path);
  char buf[32];
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < features.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", features(i, j));
      out << buf << ',';
    }
    out << labels[i] << '\n';
  }
}

Dataset Dataset::read_csv(const std::string& path, std::size_t train_count) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::size_t pos = 0;
    int column = 1;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string tok = line.substr(pos, comma == std::string::npos
                                                   ? std::string::npos
                                                   : comma - pos);
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, column, "bad dataset field '" + tok + "'");
      }
      if (comma == std::string::npos) break;
      column = static_cast<int>(comma) + 2;
      pos = comma + 1;
    }
    if (fields.size() < 2) throw ParseError(lineno, 1, "dataset row needs >= 2 fields");
    const double lab = fields.back();
    fields.pop_back();
    if (lab != 1.0 && lab != -1.0)
      throw ParseError(lineno, column, "label must be +1 or -1");
    if (!rows.empty() && fields.size() != rows.front().size())
      throw ParseError(lineno, 1, "inconsistent feature count");
    rows.push_back(std::move(fields));
    labels.push_back(lab > 0 ? 1 : -1);
  }
  if (rows.empty()) throw ParseError(1, 1, "empty dataset");
  if (train_count > rows.size())
    throw ConfigError("train_count exceeds dataset size");
  Dataset data;
  data.features = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      data.features(i, j) = rows[i][j];
  data.labels = std::move(labels);
  data.train_count = train_count;
  return data;
}

NeuralNetObjective::NeuralNetObjective(Dataset dataset, std::size_t width1,
                                       std::size_t width2)
    : FiniteSumObjective(dataset.train_count,
                         width1 * dataset.features.cols + width1 +
                             width2 * width1 + width2 + width2 + 1),
      data_(std::move(dataset)),
      input_dim_(data_.features.cols),
      w1_(width1),
      w2_(width2) {
  if (w1_ == 0 || w2_ == 0) throw ConfigError("hidden widths must be positive");
}

// Weight layout: W1 (w1 x in), b1, W2 (w2 x w1), b2, w3 (w2), b3.
double NeuralNetObjective::predict(std::span<const double> u,
                                   std::span<const double> x) const {
  const double* w1 = x.data();
  const double* b1 = w1 + w1_ * input_dim_;
  const double* w2 = b1 + w1_;
  const double* b2 = w2 + w2_ * w1_;
  const double* w3 = b2 + w2_;
  const double b3 = w3[w2_];

  double z1[64];
  double z2[64];
  for (std::size_t a = 0; a < w1_; ++a) {
    double h = b1[a];
    for (std::size_t j = 0; j < input_dim_; ++j) h += w1[a * input_dim_ + j] * u[j];
    z1[a] = sigmoid(h);
  }
  double out = b3;
  for (std::size_t a = 0; a < w2_; ++a) {
    double h = b2[a];
    for (std::size_t j = 0; j < w1_; ++j) h += w2[a * w1_ + j] * z1[j];
    z2[a] = sigmoid(h);
    out += w3[a] * z2[a];
  }
  return out;
}

double NeuralNetObjective::component_value(std::size_t i,
                                           std::span<const double> x) const {
  const double r = predict(data_.features.row(i), x) - data_.labels[i];
  return r * r;
}

void NeuralNetObjective::component_gradient(std::size_t i, std::span<const double> x,
                                            Vec& out) const {
  const double* w1 = x.data();
  const double* b1 = w1 + w1_ * input_dim_;
  const double* w2 = b1 + w1_;
  const double* b2 = w2 + w2_ * w1_;
  const double* w3 = b2 + w2_;
  const double b3 = w3[w2_];
  auto u = data_.features.row(i);

  double z1[64];
  double z2[64];
  for (std::size_t a = 0; a < w1_; ++a) {
    double h = b1[a];
    for (std::size_t j = 0; j < input_dim_; ++j) h += w1[a * input_dim_ + j] * u[j];
    z1[a] = sigmoid(h);
  }
  double pred = b3;
  for (std::size_t a = 0; a < w2_; ++a) {
    double h = b2[a];
    for (std::size_t j = 0; j < w1_; ++j) h += w2[a * w1_ + j] * z1[j];
    z2[a] = sigmoid(h);
    pred += w3[a] * z2[a];
  }

  const double dloss = 2.0 * (pred - data_.labels[i]);
  out.assign(d_, 0.0);
  double* g_w1 = out.data();
  double* g_b1 = g_w1 + w1_ * input_dim_;
  double* g_w2 = g_b1 + w1_;
  double* g_b2 = g_w2 + w2_ * w1_;
  double* g_w3 = g_b2 + w2_;
  double* g_b3 = g_w3 + w2_;

  double delta2[64];
  for (std::size_t a = 0; a < w2_; ++a) {
    g_w3[a] = dloss * z2[a];
    delta2[a] = dloss * w3[a] * z2[a] * (1.0 - z2[a]);
    g_b2[a] = delta2[a];
    for (std::size_t j = 0; j < w1_; ++j) g_w2[a * w1_ + j] = delta2[a] * z1[j];
  }
  *g_b3 = dloss;
  for (std::size_t j = 0; j < w1_; ++j) {
    double back = 0.0;
    for (std::size_t a = 0; a < w2_; ++a) back += w2[a * w1_ + j] * delta2[a];
    const double delta1 = back * z1[j] * (1.0 - z1[j]);
    g_b1[j] = delta1;
    for (std::size_t k = 0; k < input_dim_; ++k) g_w1[j * input_dim_ + k] = delta1 * u[k];
  }
}

double NeuralNetObjective::misclassification_rate(std::span<const double> x,
                                                  Split split) const {
  std::size_t begin = 0;
  std::size_t end = data_.size();
  if (split == Split::train) end = data_.train_count;
  if (split == Split::test) begin = data_.train_count;
  std::size_t wrong = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const int predicted = predict(data_.features.row(i), x) >= 0.0 ? 1 : -1;
    if (predicted != data_.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(end - begin);
}

ClassifierBundle make_binary_classifier(std::size_t n_samples, std::uint64_t data_seed,
                                        const ClassifierOptions& options) {
  if (n_samples < 10) throw ConfigError("make_binary_classifier: dataset too small");
  if (options.hidden_widths.first == 0 || options.hidden_widths.second == 0)
    throw ConfigError("make_binary_classifier: hidden widths must be positive");
  if (options.hidden_widths.first > 64 || options.hidden_widths.second > 64)
    throw ConfigError("make_binary_classifier: hidden widths capped at 64");

  // n_samples training points plus a held-out quarter: an 80/20 split of the
  // total with exactly n_samples loss components.
  const std::size_t n_test = (n_samples + 3) / 4;
  const std::size_t total = n_samples + n_test;
  const double half = options.blob_distance / 2.0;

  Dataset data;
  data.features = Matrix(total, 2);
  data.labels.resize(total);
  data.train_count = n_samples;
  RandomStream rng(derive_key(data_seed, 0xDA7Au));
  for (std::size_t i = 0; i < total; ++i) {
    const int cls = (i % 2 == 0) ? 1 : -1;
    const double mean = cls * half / std::numbers::sqrt2;
    data.features(i, 0) = mean + rng.normal();
    data.features(i, 1) = mean + rng.normal();
    int label = cls;
    if (rng.uniform01() < options.label_flip_rate) label = -label;
    data.labels[i] = label;
  }

  ClassifierBundle bundle;
  bundle.objective = std::make_shared<NeuralNetObjective>(
      std::move(data), options.hidden_widths.first, options.hidden_widths.second);
  bundle.meta.check_box_halfwidth = options.init_scale;
  if (options.lipschitz_pairs > 0) {
    // No closed-form Lipschitz constant exists; record an empirical fit with
    // a 25% safety margin.
    const double fitted = estimate_gradient_lipschitz(
        *bundle.objective, options.init_scale, options.lipschitz_pairs,
        derive_key(data_seed, 0x11995u));
    bundle.meta.grad_lipschitz = 1.25 * fitted;
    bundle.meta.lipschitz_is_empirical = true;
  }
  bundle.id = "binary_classifier(n=" + std::to_string(n_samples) + ",w=" +
              std::to_string(options.hidden_widths.first) + "x" +
              std::to_string(options.hidden_widths.second) + ",seed=" +
              std::to_string(data_seed) + ")";
  return bundle;
}

// ---------------------------------------------------------------------------

Vec finite_difference_gradient(const FiniteSumObjective& obj,
                               std::span<const double> x, double h) {
  if (h <= 0.0) throw ConfigError("finite_difference_gradient: h must be positive");
  Vec point(x.begin(), x.end());
  Vec grad(obj.dimension());
  for (std::size_t j = 0; j < obj.dimension(); ++j) {
    const double saved = point[j];
    point[j] = saved + h;
    const double fp = obj.full_value(point);
    point[j] = saved - h;
    const double fm = obj.full_value(point);
    point[j] = saved;
    grad[j] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double estimate_gradient_lipschitz(const FiniteSumObjective& obj, double scale,
                                   std::size_t n_pairs, std::uint64_t seed) {
  RandomStream rng(seed);
  Vec x(obj.dimension()), y(obj.dimension());
  Vec gx(obj.dimension()), gy(obj.dimension());
  double worst = 0.0;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    for (std::size_t j = 0; j < obj.dimension(); ++j) {
      x[j] = scale * rng.normal();
      y[j] = scale * rng.normal();
    }
    const double gap = dist(x, y);
    if (gap < 1e-12) continue;
    obj.full_gradient(x, gx);
    obj.full_gradient(y, gy);
    worst = std::max(worst, dist(gx, gy) / gap);
  }
  return worst;
}

double fit_regularization_psi1(const FiniteSumObjective& obj, double mu1,
                               double box_halfwidth, std::size_t n_samples,
                               std::uint64_t seed) {
  RandomStream rng(seed);
  Vec x(obj.dimension());
  Vec g(obj.dimension());
  double psi1 = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (double& v : x) v = box_halfwidth * (2.0 * rng.uniform01() - 1.0);
    obj.full_gradient(x, g);
    psi1 = std::max(psi1, mu1 * obj.full_value(x) - norm_sq(g));
  }
  return 1.25 * psi1;
}

}  // namespace sgldvr
