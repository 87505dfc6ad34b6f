#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fedrule/errors.hpp"
#include "fedrule/featurize.hpp"

namespace fedrule {

// Numerically stable log(1 + exp(eta)).
inline double log1p_exp(double eta) {
  return std::max(eta, 0.0) + std::log1p(std::exp(-std::fabs(eta)));
}

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// Fitted model coefficients. Layout order everywhere in the solver is
// [intercept, K rule slots, p' linear slots].
struct CoefficientVector {
  double intercept = 0.0;
  std::vector<double> rule_coefs;
  std::vector<double> linear_coefs;

  std::size_t n_nonzero() const {
    std::size_t n = 0;
    for (double b : rule_coefs) n += (b != 0.0);
    for (double b : linear_coefs) n += (b != 0.0);
    return n;
  }
};

// Server-owned dual state across communication rounds.
struct DualState {
  std::vector<double> z;         // intercept slot first
  int round = 0;
  double cumulative_scale = 0.0;  // eta_s * eta_c * round * G
};

// One client's featurized data for the ensemble stage.
struct ClientDesign {
  DesignMatrix design;
  std::vector<int> labels;
};

inline std::size_t coefficient_dim(const DesignMatrix& design) {
  return 1 + design.n_cols();
}

// Sum-form logistic loss: sum_i { log(1 + exp(eta_i)) - y_i eta_i }.
inline double logistic_loss(const std::vector<double>& w, const DesignMatrix& design,
                            const std::vector<int>& labels) {
  if (w.size() != coefficient_dim(design) || labels.size() != design.n_rows)
    throw data_error("loss dimensions disagree");
  double loss = 0.0;
  for (std::size_t i = 0; i < design.n_rows; ++i) {
    const double* x = design.row(i);
    double eta = w[0];
    for (std::size_t c = 0; c < design.n_cols(); ++c) eta += w[c + 1] * x[c];
    loss += log1p_exp(eta) - labels[i] * eta;
  }
  return loss;
}

// Gradient of the sum-form logistic loss w.r.t. [intercept, columns...].
inline std::vector<double> logistic_loss_grad(const std::vector<double>& w,
                                              const DesignMatrix& design,
                                              const std::vector<int>& labels) {
  if (w.size() != coefficient_dim(design) || labels.size() != design.n_rows)
    throw data_error("gradient dimensions disagree");
  std::vector<double> grad(w.size(), 0.0);
  for (std::size_t i = 0; i < design.n_rows; ++i) {
    const double* x = design.row(i);
    double eta = w[0];
    for (std::size_t c = 0; c < design.n_cols(); ++c) eta += w[c + 1] * x[c];
    if (!std::isfinite(eta)) throw numeric_error("non-finite linear predictor");
    const double err = sigmoid(eta) - labels[i];
    grad[0] += err;
    for (std::size_t c = 0; c < design.n_cols(); ++c) grad[c + 1] += err * x[c];
  }
  return grad;
}

// Closed-form minimizer of <-z, w> + threshold*||w||_1 + 0.5*||w||^2:
// componentwise soft-threshold. Slot 0 is the unpenalized intercept and
// passes through.
inline std::vector<double> prox_l1(const std::vector<double>& z, double threshold) {
  if (!(threshold >= 0.0)) throw numeric_error("prox threshold must be >= 0");
  std::vector<double> w(z.size());
  if (!z.empty()) w[0] = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) {
    const double mag = std::fabs(z[i]) - threshold;
    w[i] = mag > 0.0 ? (z[i] > 0.0 ? mag : -mag) : 0.0;
  }
  return w;
}

// G local dual-averaging iterations on one client. Returns the round-start
// and round-end dual vectors; their difference is the accumulated negative
// gradient information the server aggregates.
inline std::pair<std::vector<double>, std::vector<double>> client_update(
    const std::vector<double>& z_round, const ClientDesign& client,
    const FedConfig& config, int round) {
  std::vector<double> z = z_round;
  for (int g = 0; g < config.local_iters; ++g) {
    const double cumulative = config.eta_server * config.eta_client *
                                  static_cast<double>(round) * config.local_iters +
                              config.eta_client * static_cast<double>(g + 1);
    const std::vector<double> w = prox_l1(z, cumulative * config.lambda);
    const std::vector<double> grad = logistic_loss_grad(w, client.design, client.labels);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] -= config.eta_client * grad[i];
      if (!std::isfinite(z[i])) throw numeric_error("non-finite dual update");
    }
  }
  return {z_round, std::move(z)};
}

// Server aggregation: average dual increment across clients, applied with
// the server step. With one client and eta_s = 1 this passes the client's
// final dual straight through. `weights` (optional, non-standard) switches
// the average to client-size weighting.
inline DualState server_round(
    const DualState& state,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& client_pairs,
    const FedConfig& config, const std::vector<double>* weights = nullptr) {
  if (client_pairs.empty()) throw data_error("server round needs at least one client");
  const std::size_t dim = state.z.size();
  for (const auto& [z0, zg] : client_pairs)
    if (z0.size() != dim || zg.size() != dim)
      throw data_error("client dual dimensions disagree");
  if (weights && weights->size() != client_pairs.size())
    throw data_error("aggregation weights must cover every client");

  std::vector<double> delta(dim, 0.0);
  for (std::size_t m = 0; m < client_pairs.size(); ++m) {
    const double wgt = weights ? (*weights)[m]
                               : 1.0 / static_cast<double>(client_pairs.size());
    const auto& [z0, zg] = client_pairs[m];
    for (std::size_t i = 0; i < dim; ++i) delta[i] += wgt * (zg[i] - z0[i]);
  }

  DualState next;
  next.z.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    next.z[i] = state.z[i] + config.eta_server * delta[i];
  next.round = state.round + 1;
  next.cumulative_scale = config.eta_server * config.eta_client *
                          static_cast<double>(next.round) * config.local_iters;
  return next;
}

struct SolveTraceRow {
  int round = 0;
  double delta_norm = 0.0;       // L2 norm of the applied dual increment
  std::size_t nnz = 0;           // nonzeros after a hypothetical recovery
};

struct SolveOptions {
  bool weighted_aggregation = false;  // weight dual increments by client size
  std::vector<SolveTraceRow>* trace = nullptr;
};

// Full FedDA run: R rounds of client updates and server aggregation, primal
// recovered once at the end through the proximal map.
inline CoefficientVector solve(const std::vector<ClientDesign>& clients,
                               const FedConfig& config,
                               const SolveOptions& options = {}) {
  if (clients.empty()) throw data_error("solver needs at least one client");
  const std::size_t dim = coefficient_dim(clients.front().design);
  const std::size_t n_rule = clients.front().design.n_rule_cols;
  const std::size_t n_linear = clients.front().design.n_linear_cols;
  for (const auto& c : clients) {
    if (coefficient_dim(c.design) != dim ||
        c.design.n_rule_cols != n_rule || c.design.n_linear_cols != n_linear)
      throw data_error("clients must be featurized against the same terms");
    if (c.labels.size() != c.design.n_rows)
      throw data_error("labels must match design rows");
  }

  std::vector<double> agg_weights;
  if (options.weighted_aggregation) {
    double total = 0.0;
    for (const auto& c : clients) total += static_cast<double>(c.design.n_rows);
    for (const auto& c : clients)
      agg_weights.push_back(static_cast<double>(c.design.n_rows) / total);
  }

  DualState state;
  state.z.assign(dim, 0.0);  // z_0 = w_0 = 0 under the Euclidean dual map

  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs(clients.size());
  for (int r = 0; r < config.rounds; ++r) {
    for (std::size_t m = 0; m < clients.size(); ++m)
      pairs[m] = client_update(state.z, clients[m], config, r);
    DualState next = server_round(state, pairs, config,
                                  options.weighted_aggregation ? &agg_weights : nullptr);

    double z_max = 0.0;
    for (double zi : next.z) z_max = std::max(z_max, std::fabs(zi));
    if (z_max > 1e8)
      throw numeric_error(
          "dual iterate exceeded 1e8 at round " + std::to_string(r + 1) +
          "; reduce eta_client/eta_server for this problem scale");

    if (options.trace) {
      SolveTraceRow row;
      row.round = next.round;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = next.z[i] - state.z[i];
        norm2 += d * d;
      }
      row.delta_norm = std::sqrt(norm2);
      const auto w = prox_l1(next.z, next.cumulative_scale * config.lambda);
      for (std::size_t i = 1; i < w.size(); ++i) row.nnz += (w[i] != 0.0);
      options.trace->push_back(row);
    }
    state = std::move(next);
  }

  const std::vector<double> w = prox_l1(state.z, state.cumulative_scale * config.lambda);
  CoefficientVector coef;
  coef.intercept = w[0];
  coef.rule_coefs.assign(w.begin() + 1, w.begin() + 1 + n_rule);
  coef.linear_coefs.assign(w.begin() + 1 + n_rule, w.end());
  return coef;
}

}  // namespace fedrule
