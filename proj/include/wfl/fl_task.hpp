#pragma once

#include "wfl/types.hpp"

#include <map>
#include <span>
#include <vector>

namespace wfl {

struct Dataset
{
  Eigen::MatrixXd features; // n x d
  std::vector<int> labels;  // n labels in [0, num_classes)
  int num_classes = 2;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  Eigen::Index param_count() const { return num_classes * (dim() + 1); }

  /// Throws std::invalid_argument when shapes disagree, a label is out of
  /// range, or some class never appears.
  void validate() const;
};

struct Shard
{
  int owner = 0;
  std::vector<Eigen::Index> indices;

  std::size_t size() const { return indices.size(); }
};

/// Softmax-regression parameters: a K x (d + 1) weight matrix stored
/// column-major in one flat vector; the last column is the bias.
using ModelParams = Eigen::VectorXd;

/// Client id -> weight over the participating set.
using AggregationWeights = std::map<int, double>;

struct SyntheticTask
{
  Dataset train;
  Dataset test;
};

Eigen::MatrixXd draw_cluster_means(int classes, int dim, double separation, Rng& rng);

/// Draws n points around `means`; labels cycle 0..K-1 so counts are balanced to within one.
Dataset sample_clusters(const Eigen::MatrixXd& means, int n, double cluster_spread, Rng& rng);

Dataset generate_synthetic_dataset(int n, int classes, int dim, double cluster_spread, Rng& rng);

/// Train and test sets drawn around the same cluster means.
SyntheticTask generate_synthetic_task(int n_train, int n_test, int classes, int dim, double cluster_spread,
                                      double separation, Rng& rng);

/// Reads a dataset from CSV whose first line is "n,d,K" followed by n rows of
/// d features and an integer label.
Dataset load_dataset_csv(const std::string& path);

std::vector<Shard> dirichlet_partition(const Dataset& dataset, int n_clients, double tau, Rng& rng);

ModelParams zero_model(const Dataset& dataset);

/// Mean softmax cross-entropy over the given rows.
double local_loss(const ModelParams& params, const Dataset& dataset, const Shard& shard);
double full_loss(const ModelParams& params, const Dataset& dataset);
double accuracy(const ModelParams& params, const Dataset& dataset);

/// Gradient of the mean cross-entropy over `rows`.
ModelParams loss_gradient(const ModelParams& params, const Dataset& dataset, std::span<const Eigen::Index> rows);

ModelParams local_train(const ModelParams& start, const Dataset& dataset, const Shard& shard, int epochs, double lr,
                        int batch, Rng& rng);

/// Data-proportional weights D_j / sum D over the given shards.
AggregationWeights data_proportional_weights(std::span<const Shard* const> shards);

/// Entrywise weighted sum. Throws std::invalid_argument when the sizes differ
/// or the weights do not sum to one within 1e-9.
ModelParams aggregate(std::span<const ModelParams> models, std::span<const double> weights);

/// sum_j k_j F_j(w_j) with k renormalized over the participants.
double global_loss(const std::map<int, ModelParams>& models, const std::map<int, const Shard*>& shards,
                   const AggregationWeights& weights, const Dataset& dataset);

struct OracleNotConverged : std::runtime_error
{
  OracleNotConverged(double best_loss, double grad_norm)
    : std::runtime_error("optimal_loss_oracle: iteration cap reached"), best_loss(best_loss), grad_norm(grad_norm)
  {
  }
  double best_loss;
  double grad_norm;
};

struct OracleResult
{
  double loss = 0.0;
  ModelParams params;
  int iterations = 0;
};

/// Centralized full-batch Newton descent until the gradient norm drops below `tolerance`.
OracleResult optimal_loss_oracle(const Dataset& dataset, double tolerance, int max_iterations = 500);
OracleResult optimal_loss_oracle(const Dataset& dataset, double tolerance, const ModelParams& start,
                                 int max_iterations = 500);

} // namespace wfl
