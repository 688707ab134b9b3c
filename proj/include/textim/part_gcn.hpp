#pragma once

#include <textim/motion.hpp>

#include <utility>
#include <vector>

namespace textim {

// Per-node feature: 6d rotation + relative position; the root stores
// neither in the pose vector, so its node is zero-padded.
constexpr Index kNodeFeatureDim = 9;

// Spatio-temporal graph over T frames x N joints. Node t*N + i is joint i
// at frame t. Edges: skeleton tree within each frame, plus one temporal
// edge per joint between consecutive frames.
struct MotionGraph {
  Index num_frames = 0;
  Index num_joints = 0;
  Matrix features;  // (T*N) x kNodeFeatureDim
  std::vector<std::pair<Index, Index>> edges;  // undirected, global ids
};

MotionGraph buildGraph(const MotionSequence& motion, const Skeleton& skeleton);

// One N x kNodeFeatureDim matrix per frame, gathered from the pose dims.
std::vector<Matrix> frameNodeFeatures(const Matrix& frames,
                                      const PoseLayout& layout);

// D^(-1/2) (A + I) D^(-1/2) with D the degree matrix of A + I.
// A must be square, symmetric, and non-negative.
Matrix normalizeAdjacency(const Matrix& adjacency);

// Intra-frame adjacency split by body part: five intra-part subsets in the
// order {left arm, right arm, torso incl. pelvis, left leg, right leg},
// then one subset holding the edges whose endpoints lie in different parts.
// Every skeleton edge lands in exactly one subset.
struct AdjacencySubsets {
  Index num_joints = 0;
  std::vector<std::vector<std::pair<int, int>>> edges;  // un-normalized
  std::vector<Matrix> normalized;  // self-loops + symmetric normalization

  Index count() const { return static_cast<Index>(normalized.size()); }
};

AdjacencySubsets buildAdjacencySubsets(const Skeleton& skeleton);

// ReLU(sum_k A_hat[k] * features * weights[k]); one frame's node features.
Matrix aggregate(const Matrix& features, const std::vector<Matrix>& a_hat,
                 const std::vector<Matrix>& weights);

// Strided valid temporal convolution (no activation) followed by mean
// pooling over the remaining frames. Each tap is w_in x w_out; output
// frame p sums frames[p*stride + dt] * taps[dt] + bias per node row.
// When T < kernel size the single window is clipped to the frames that
// exist (T = 1 degenerates to a per-frame affine map).
// conv_out, when given, receives the pre-pool outputs for the backward pass.
Matrix temporalCompress(const std::vector<Matrix>& frames,
                        const std::vector<Matrix>& taps, const Vector& bias,
                        Index stride, std::vector<Matrix>* conv_out = nullptr);

// Row-wise cosine similarity. Diagonal is exactly 1 for nonzero rows; a
// zero row yields a zero similarity row and column (diagonal included).
Matrix similarity(const Matrix& rows);

// Upper triangle of S flattened row-major, diagonal included:
// N(N+1)/2 values. The learnable projection to the condition width lives
// with the denoiser's condition projections.
Vector spatialFeatureVector(const Matrix& s);

struct GcnConfig {
  Index num_joints = 22;
  Index hidden_width = 16;
  int num_layers = 2;
  Index conv_kernel = 4;
  Index conv_stride = 2;

  Index spatialDim() const { return num_joints * (num_joints + 1) / 2; }
  void validate() const;
};

struct GcnParams {
  GcnConfig config;
  AdjacencySubsets subsets;                // fixed, from the skeleton
  std::vector<std::vector<Matrix>> layers; // [layer][subset], in x out
  std::vector<Matrix> conv_taps;           // kernel taps, hidden x hidden
  Vector conv_bias;                        // hidden
};

// The learnable subset: layer weights and the temporal convolution.
struct GcnGrads {
  std::vector<std::vector<Matrix>> layers;
  std::vector<Matrix> conv_taps;
  Vector conv_bias;
};

GcnParams initGcn(const GcnConfig& config, const Skeleton& skeleton, Rng& rng);
GcnGrads gcnZerosLike(const GcnParams& params);
std::vector<TensorRef> gcnTensorRefs(GcnParams& params);
std::vector<TensorRef> gcnTensorRefs(GcnGrads& grads);
Index gcnParameterCount(const GcnParams& params);

struct GcnCache {
  std::vector<std::vector<Matrix>> hidden;  // [layer 0..L][frame], N x w
  std::vector<std::vector<Matrix>> pre;     // [layer][frame] pre-ReLU
  std::vector<Matrix> conv_out;             // pre-pool outputs
  Matrix pooled;                            // N x hidden
  Vector row_norms;                         // N
  Matrix unit_rows;                         // N x hidden, zero rows kept zero
  Matrix sim;                               // N x N
  Vector feature;                           // triu flatten
};

// Full chain: per-frame part convolution -> temporal compression -> cosine
// similarity -> flattened upper triangle.
Vector gcnForward(const GcnParams& params,
                  const std::vector<Matrix>& frame_features, GcnCache& cache);

// Convenience: gather node features from raw pose rows, then gcnForward.
Vector gcnSpatialCondition(const GcnParams& params, const Matrix& frames,
                           const PoseLayout& layout, GcnCache& cache);

// Accumulates d(loss)/d(weights) into grads given d(loss)/d(feature).
// Gradients w.r.t. the input features are not produced: the graph input is
// data, never a learnable tensor. Constant similarity diagonals and zero
// rows contribute zero gradient.
void gcnBackward(const GcnParams& params, const GcnCache& cache,
                 const Vector& d_feature, GcnGrads& grads);

}  // namespace textim
