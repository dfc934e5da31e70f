#pragma once

// Reference implementations written directly from the definitions, without
// reusing any library routine they are compared against.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "boxprior/geometry.hpp"
#include "boxprior/numerics/matrix.hpp"
#include "boxprior/numerics/random.hpp"

namespace oracle {

using Affine = std::array<double, 16>;  // row-major 4x4

struct Projection {
  std::size_t index = 0;
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Pushes each point through the stages one at a time (last stage first),
/// then through K, and divides by the third homogeneous coordinate.
std::vector<Projection> project(const boxprior::geometry::PointCloud& cloud,
                                const std::array<double, 12>& k,
                                std::span<const Affine> stages, int width, int height);

/// Corners from the box parameters, written out by sign pattern.
std::vector<std::array<double, 3>> box_corners(const boxprior::geometry::BoundingBox3D& box);

/// Min/max over the projections of corners with positive depth, before any
/// clamping: {x1, y1, x2, y2}.
std::array<double, 4> corner_extent(const boxprior::geometry::BoundingBox3D& box,
                                    const std::array<double, 12>& k,
                                    std::span<const Affine> stages);

/// Linear scan with the strict inequalities.
std::vector<std::size_t> members(std::span<const boxprior::geometry::ProjectedPoint> projected,
                                 const boxprior::geometry::BoundingBox2D& box);

/// Jaccard loss of the misprediction set `wrong` for foreground `fg`.
double jaccard_loss(const std::vector<bool>& fg, const std::vector<bool>& wrong);

/// Lovasz extension evaluated as a maximum over every ordering of the
/// points; averaged over the classes present in `labels`. Small N only.
double lovasz_exhaustive(const boxprior::numerics::Matrix& probs, std::span<const int> labels);

/// The same extension as the integral over thresholds t of the Jaccard loss
/// of {i : error_i >= t}. Cheap enough for every small grid instance.
double lovasz_level_sets(const boxprior::numerics::Matrix& probs, std::span<const int> labels);

double cross_entropy(const boxprior::numerics::Matrix& logits, std::span<const int> labels);
double kl_divergence(const boxprior::numerics::Matrix& p, const boxprior::numerics::Matrix& q);

/// Per-head loops over scores, softmax and weighted sums.
boxprior::numerics::Matrix attention(const std::vector<boxprior::numerics::Matrix>& wq,
                                     const std::vector<boxprior::numerics::Matrix>& wk,
                                     const std::vector<boxprior::numerics::Matrix>& wv,
                                     const boxprior::numerics::Matrix& query,
                                     std::span<const double> key_scalar,
                                     const boxprior::numerics::Matrix& value);

/// Full confusion matrix, then TP / (TP + FP + FN); 1 for absent classes.
std::vector<double> iou(std::span<const int> truth, std::span<const int> predicted,
                        std::size_t classes);

// ------------------------------------------------------------ generators

Affine random_rigid(boxprior::numerics::Rng& rng, double max_translation);
boxprior::geometry::RigidTransform to_transform(const Affine& a);
Affine from_transform(const boxprior::geometry::RigidTransform& t);
boxprior::geometry::PoseChain random_chain(boxprior::numerics::Rng& rng, std::size_t stages,
                                           double max_translation);
boxprior::numerics::Matrix random_matrix(boxprior::numerics::Rng& rng, std::size_t rows,
                                         std::size_t cols, double scale = 1.0);
/// Rows drawn from a random softmax.
boxprior::numerics::Matrix random_probs(boxprior::numerics::Rng& rng, std::size_t rows,
                                        std::size_t cols);

}  // namespace oracle
