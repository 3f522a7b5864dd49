#ifndef SGLDVR_OBJECTIVES_HPP
#define SGLDVR_OBJECTIVES_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgldvr/vec.hpp"

namespace sgldvr {

// Analytically known constants for an objective. Lipschitz constants follow
// the componentwise worst case so they are valid for both the full gradient
// and every component gradient.
struct ObjectiveMetadata {
  double grad_lipschitz = 0.0;  // L
  std::optional<double> hessian_lipschitz;            // L2
  std::optional<double> strict_saddle_q;              // q
  std::optional<double> reg_mu1, reg_psi1, reg_mu2, reg_psi2;
  std::optional<double> known_min_value;
  std::vector<std::pair<Vec, double>> known_fsp_list;  // (point, min Hessian eigenvalue)
  bool lipschitz_is_empirical = false;
  bool regularization_is_empirical = false;
  double check_box_halfwidth = 2.0;  // box used by randomized spot checks

  bool has_regularization() const {
    return reg_mu1 && reg_psi1 && reg_mu2 && reg_psi2;
  }
};

// Finite-sum objective f(x) = (1/n) sum_i f_i(x). Immutable after
// construction; evaluation is re-entrant.
class FiniteSumObjective {
 public:
  virtual ~FiniteSumObjective() = default;

  std::size_t component_count() const { return n_; }
  std::size_t dimension() const { return d_; }

  virtual double component_value(std::size_t i, std::span<const double> x) const = 0;
  virtual void component_gradient(std::size_t i, std::span<const double> x,
                                  Vec& out) const = 0;

  // Defaults average the components; subclasses may override with closed forms.
  virtual double full_value(std::span<const double> x) const;
  virtual void full_gradient(std::span<const double> x, Vec& out) const;

  Vec full_gradient(std::span<const double> x) const {
    Vec g(d_);
    full_gradient(x, g);
    return g;
  }

  virtual bool has_hessian_vec() const { return false; }
  virtual void hessian_vec(std::span<const double> x, std::span<const double> v,
                           Vec& out) const;

 protected:
  FiniteSumObjective(std::size_t n, std::size_t d);
  std::size_t n_;
  std::size_t d_;
};

struct ObjectiveBundle {
  std::shared_ptr<const FiniteSumObjective> objective;
  ObjectiveMetadata meta;
  std::string id;
};

// f(x) = scale * ||x||^2, split by coordinate into n = d components
// f_i(x) = scale * d * x_i^2 so the average recovers f and the estimator
// variance is nonzero.
ObjectiveBundle make_quadratic(std::size_t d, double scale);

// f(x) = (1/2)(-neg_eig * x_1^2 + pos_eig * sum_{j>=2} x_j^2); the origin is
// the unique first-order stationary point and a strict saddle.
ObjectiveBundle make_saddle_quadratic(std::size_t d, double neg_eig, double pos_eig);

// f(x) = sum_i sigmoid(a_i . x) + gamma * ||x||^2 + C, one component per row
// of A (each carrying the regularizer so the average recovers f).
ObjectiveBundle make_sigmoid_net(const Matrix& A, double tikhonov_gamma,
                                 double offset_C);

enum class Split { train, test, all };

// Two labelled Gaussian blobs; rows [0, train_count) are the training split.
struct Dataset {
  Matrix features;
  std::vector<int> labels;  // +1 / -1
  std::size_t train_count = 0;

  std::size_t size() const { return labels.size(); }
  void write_csv(const std::string& path) const;
  static Dataset read_csv(const std::string& path, std::size_t train_count);
};

// Fully connected 2-hidden-layer net with logistic-sigmoid activations and a
// linear output, trained with per-sample squared loss against labels in
// {-1,+1}. Components are the training samples.
class NeuralNetObjective : public FiniteSumObjective {
 public:
  NeuralNetObjective(Dataset dataset, std::size_t width1, std::size_t width2);

  double component_value(std::size_t i, std::span<const double> x) const override;
  void component_gradient(std::size_t i, std::span<const double> x,
                          Vec& out) const override;

  double predict(std::span<const double> features, std::span<const double> x) const;
  double misclassification_rate(std::span<const double> x, Split split) const;

  const Dataset& dataset() const { return data_; }
  std::size_t weight_count() const { return d_; }

 private:
  Dataset data_;
  std::size_t input_dim_;
  std::size_t w1_, w2_;
};

struct ClassifierBundle {
  std::shared_ptr<const NeuralNetObjective> objective;
  ObjectiveMetadata meta;
  std::string id;
};

struct ClassifierOptions {
  std::pair<std::size_t, std::size_t> hidden_widths{8, 8};
  double label_flip_rate = 0.05;
  double blob_distance = 3.0;   // distance between the two class means
  double init_scale = 0.1;      // Gaussian init box used for the empirical L fit
  std::size_t lipschitz_pairs = 10000;  // 0 skips the fit (meta.L stays 0)
};

// Builds the synthetic dataset (n_samples training points plus a held-out
// test split of n_samples/4, i.e. an 80/20 split of the whole) and the net.
ClassifierBundle make_binary_classifier(std::size_t n_samples,
                                        std::uint64_t data_seed,
                                        const ClassifierOptions& options = {});

// Central differences (f(x + h e_j) - f(x - h e_j)) / (2h), componentwise.
Vec finite_difference_gradient(const FiniteSumObjective& obj,
                               std::span<const double> x, double h);

// max ||grad f(x) - grad f(y)|| / ||x - y|| over seeded Gaussian pairs of the
// given scale; the basis of "empirical" Lipschitz constants.
double estimate_gradient_lipschitz(const FiniteSumObjective& obj, double scale,
                                   std::size_t n_pairs, std::uint64_t seed);

// Smallest psi1 >= 0 such that ||grad f||^2 >= mu1 f - psi1 at seeded samples
// in the box; used to record empirical Assumption-3 fits.
double fit_regularization_psi1(const FiniteSumObjective& obj, double mu1,
                               double box_halfwidth, std::size_t n_samples,
                               std::uint64_t seed);

}  // namespace sgldvr

#endif
