#include <textim/part_gcn.hpp>

#include <cmath>
#include <string>

namespace textim {

std::vector<Matrix> frameNodeFeatures(const Matrix& frames,
                                      const PoseLayout& layout) {
  require(frames.cols() == layout.total_dim,
          "frameNodeFeatures: pose width mismatch");
  const Index n = layout.num_joints;
  std::vector<Matrix> out;
  out.reserve(frames.rows());
  for (Index t = 0; t < frames.rows(); ++t) {
    Matrix f = Matrix::Zero(n, kNodeFeatureDim);  // root row stays zero
    for (int j = 1; j < layout.num_joints; ++j) {
      for (int c = 0; c < 6; ++c) f(j, c) = frames(t, layout.rotationDim(j, c));
      for (int a = 0; a < 3; ++a)
        f(j, 6 + a) = frames(t, layout.positionDim(j, a));
    }
    out.push_back(std::move(f));
  }
  return out;
}

MotionGraph buildGraph(const MotionSequence& motion, const Skeleton& skeleton) {
  require(motion.layout.num_joints == skeleton.numJoints(),
          "buildGraph: joint count mismatch");
  const Index n = skeleton.numJoints();
  const Index t_frames = motion.frames.rows();
  require(t_frames >= 1, "buildGraph: empty motion");

  MotionGraph graph;
  graph.num_frames = t_frames;
  graph.num_joints = n;
  std::vector<Matrix> per_frame = frameNodeFeatures(motion.frames, motion.layout);
  graph.features.resize(t_frames * n, kNodeFeatureDim);
  for (Index t = 0; t < t_frames; ++t)
    graph.features.middleRows(t * n, n) = per_frame[t];

  for (Index t = 0; t < t_frames; ++t)
    for (Index j = 1; j < n; ++j)
      graph.edges.emplace_back(t * n + skeleton.parents[j], t * n + j);
  for (Index t = 0; t + 1 < t_frames; ++t)
    for (Index i = 0; i < n; ++i)
      graph.edges.emplace_back(t * n + i, (t + 1) * n + i);
  return graph;
}

Matrix normalizeAdjacency(const Matrix& adjacency) {
  require(adjacency.rows() == adjacency.cols(),
          "normalizeAdjacency: matrix must be square");
  require((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() == 0.0,
          "normalizeAdjacency: matrix must be symmetric");
  require(adjacency.minCoeff() >= 0.0,
          "normalizeAdjacency: entries must be non-negative");
  Matrix with_loops =
      adjacency + Matrix::Identity(adjacency.rows(), adjacency.cols());
  Vector inv_sqrt = with_loops.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * with_loops * inv_sqrt.asDiagonal();
}

namespace {

// The five-part split used by the graph convolution: the pelvis joins the
// torso (masks keep them separate).
BodyPart gcnPart(BodyPart part) {
  return part == BodyPart::Pelvis ? BodyPart::Torso : part;
}

constexpr BodyPart kSubsetOrder[5] = {BodyPart::LeftArm, BodyPart::RightArm,
                                      BodyPart::Torso, BodyPart::LeftLeg,
                                      BodyPart::RightLeg};

int subsetOf(BodyPart part) {
  for (int s = 0; s < 5; ++s)
    if (kSubsetOrder[s] == part) return s;
  throw std::logic_error("subsetOf: unreachable");
}

}  // namespace

AdjacencySubsets buildAdjacencySubsets(const Skeleton& skeleton) {
  const Index n = skeleton.numJoints();
  AdjacencySubsets subsets;
  subsets.num_joints = n;
  subsets.edges.assign(6, {});
  std::vector<Matrix> raw(6, Matrix::Zero(n, n));

  for (int j = 1; j < skeleton.numJoints(); ++j) {
    int p = skeleton.parents[j];
    BodyPart a = gcnPart(skeleton.parts[p]);
    BodyPart b = gcnPart(skeleton.parts[j]);
    int s = (a == b) ? subsetOf(a) : 5;
    subsets.edges[s].emplace_back(p, j);
    raw[s](p, j) = 1.0;
    raw[s](j, p) = 1.0;
  }
  for (const Matrix& a : raw) subsets.normalized.push_back(normalizeAdjacency(a));
  return subsets;
}

namespace {

Matrix aggregatePre(const Matrix& features, const std::vector<Matrix>& a_hat,
                    const std::vector<Matrix>& weights) {
  require(!a_hat.empty() && a_hat.size() == weights.size(),
          "aggregate: subset/weight count mismatch");
  const Index n = features.rows();
  Matrix z = Matrix::Zero(n, weights[0].cols());
  for (size_t k = 0; k < a_hat.size(); ++k) {
    require(a_hat[k].rows() == n && a_hat[k].cols() == n,
            "aggregate: adjacency size mismatch");
    require(weights[k].rows() == features.cols(),
            "aggregate: weight input width mismatch");
    require(weights[k].cols() == z.cols(),
            "aggregate: weight output width mismatch");
    z += a_hat[k] * features * weights[k];
  }
  return z;
}

}  // namespace

Matrix aggregate(const Matrix& features, const std::vector<Matrix>& a_hat,
                 const std::vector<Matrix>& weights) {
  return aggregatePre(features, a_hat, weights).cwiseMax(0.0);
}

Matrix temporalCompress(const std::vector<Matrix>& frames,
                        const std::vector<Matrix>& taps, const Vector& bias,
                        Index stride, std::vector<Matrix>* conv_out) {
  const Index t_frames = static_cast<Index>(frames.size());
  const Index kernel = static_cast<Index>(taps.size());
  require(t_frames >= 1, "temporalCompress: need at least one frame");
  require(kernel >= 1, "temporalCompress: need at least one tap");
  require(stride >= 1, "temporalCompress: stride must be positive");
  const Index n = frames[0].rows();
  const Index w_in = frames[0].cols();
  const Index w_out = taps[0].cols();
  require(bias.size() == w_out, "temporalCompress: bias width mismatch");
  for (const Matrix& f : frames)
    require(f.rows() == n && f.cols() == w_in,
            "temporalCompress: ragged frame shapes");
  for (const Matrix& k : taps)
    require(k.rows() == w_in && k.cols() == w_out,
            "temporalCompress: tap shape mismatch");

  // Valid windows when enough frames exist; otherwise one clipped window.
  const bool clipped = t_frames < kernel;
  const Index windows = clipped ? 1 : (t_frames - kernel) / stride + 1;
  const Index taps_used = clipped ? t_frames : kernel;

  Matrix pooled = Matrix::Zero(n, w_out);
  for (Index p = 0; p < windows; ++p) {
    Matrix out = Matrix::Zero(n, w_out);
    const Index base = clipped ? 0 : p * stride;
    for (Index dt = 0; dt < taps_used; ++dt) out += frames[base + dt] * taps[dt];
    out.rowwise() += bias.transpose();
    pooled += out;
    if (conv_out) conv_out->push_back(std::move(out));
  }
  return pooled / static_cast<double>(windows);
}

Matrix similarity(const Matrix& rows) {
  const Index n = rows.rows();
  Matrix unit = Matrix::Zero(n, rows.cols());
  Vector norms(n);
  for (Index i = 0; i < n; ++i) {
    norms[i] = rows.row(i).norm();
    if (norms[i] > 0.0) unit.row(i) = rows.row(i) / norms[i];
  }
  Matrix s = unit * unit.transpose();
  for (Index i = 0; i < n; ++i) s(i, i) = norms[i] > 0.0 ? 1.0 : 0.0;
  return s;
}

Vector spatialFeatureVector(const Matrix& s) {
  require(s.rows() == s.cols(), "spatialFeatureVector: matrix must be square");
  const Index n = s.rows();
  Vector v(n * (n + 1) / 2);
  Index at = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) v[at++] = s(i, j);
  return v;
}

void GcnConfig::validate() const {
  require(num_joints >= 1, "gcn config: num_joints must be positive");
  require(hidden_width >= 1, "gcn config: hidden_width must be positive");
  require(num_layers >= 1, "gcn config: num_layers must be positive");
  require(conv_kernel >= 1, "gcn config: conv_kernel must be positive");
  require(conv_stride >= 1, "gcn config: conv_stride must be positive");
}

namespace {

Matrix uniformMatrix(Index rows, Index cols, double scale, Rng& rng) {
  Matrix w(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      w(i, j) = (2.0 * rng.uniform() - 1.0) * scale;
  return w;
}

template <class Holder>
std::vector<TensorRef> gcnRefs(Holder& holder) {
  std::vector<TensorRef> refs;
  for (size_t l = 0; l < holder.layers.size(); ++l)
    for (size_t k = 0; k < holder.layers[l].size(); ++k) {
      Matrix& w = holder.layers[l][k];
      refs.push_back({"gcn" + std::to_string(l) + ".k" + std::to_string(k),
                      w.data(), w.rows(), w.cols()});
    }
  for (size_t dt = 0; dt < holder.conv_taps.size(); ++dt) {
    Matrix& w = holder.conv_taps[dt];
    refs.push_back(
        {"conv.k" + std::to_string(dt), w.data(), w.rows(), w.cols()});
  }
  refs.push_back(
      {"conv.b", holder.conv_bias.data(), holder.conv_bias.size(), 1});
  return refs;
}

}  // namespace

GcnParams initGcn(const GcnConfig& config, const Skeleton& skeleton, Rng& rng) {
  config.validate();
  require(skeleton.numJoints() == config.num_joints,
          "initGcn: skeleton does not match config");
  GcnParams params;
  params.config = config;
  params.subsets = buildAdjacencySubsets(skeleton);

  for (int l = 0; l < config.num_layers; ++l) {
    const Index in = l == 0 ? kNodeFeatureDim : config.hidden_width;
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<Matrix> layer;
    for (Index k = 0; k < params.subsets.count(); ++k)
      layer.push_back(uniformMatrix(in, config.hidden_width, scale, rng));
    params.layers.push_back(std::move(layer));
  }

  const double conv_scale =
      1.0 / std::sqrt(static_cast<double>(config.hidden_width * config.conv_kernel));
  for (Index dt = 0; dt < config.conv_kernel; ++dt)
    params.conv_taps.push_back(uniformMatrix(config.hidden_width,
                                             config.hidden_width, conv_scale,
                                             rng));
  params.conv_bias = Vector::Zero(config.hidden_width);
  return params;
}

GcnGrads gcnZerosLike(const GcnParams& params) {
  GcnGrads grads;
  for (const auto& layer : params.layers) {
    std::vector<Matrix> zero;
    for (const Matrix& w : layer) zero.push_back(Matrix::Zero(w.rows(), w.cols()));
    grads.layers.push_back(std::move(zero));
  }
  for (const Matrix& w : params.conv_taps)
    grads.conv_taps.push_back(Matrix::Zero(w.rows(), w.cols()));
  grads.conv_bias = Vector::Zero(params.conv_bias.size());
  return grads;
}

std::vector<TensorRef> gcnTensorRefs(GcnParams& params) {
  return gcnRefs(params);
}

std::vector<TensorRef> gcnTensorRefs(GcnGrads& grads) { return gcnRefs(grads); }

Index gcnParameterCount(const GcnParams& params) {
  Index count = 0;
  for (const TensorRef& ref : gcnTensorRefs(const_cast<GcnParams&>(params)))
    count += ref.size();
  return count;
}

Vector gcnForward(const GcnParams& params,
                  const std::vector<Matrix>& frame_features, GcnCache& cache) {
  const GcnConfig& config = params.config;
  config.validate();
  const Index t_frames = static_cast<Index>(frame_features.size());
  require(t_frames >= 1, "gcnForward: need at least one frame");
  for (const Matrix& f : frame_features)
    require(f.rows() == config.num_joints && f.cols() == kNodeFeatureDim,
            "gcnForward: node feature shape mismatch");
  require(static_cast<int>(params.layers.size()) == config.num_layers,
          "gcnForward: layer count mismatch");

  cache.hidden.assign(1, frame_features);
  cache.pre.clear();
  for (int l = 0; l < config.num_layers; ++l) {
    std::vector<Matrix> z_frames, h_frames;
    for (Index t = 0; t < t_frames; ++t) {
      Matrix z = aggregatePre(cache.hidden[l][t], params.subsets.normalized,
                              params.layers[l]);
      h_frames.push_back(z.cwiseMax(0.0));
      z_frames.push_back(std::move(z));
    }
    cache.pre.push_back(std::move(z_frames));
    cache.hidden.push_back(std::move(h_frames));
  }

  cache.conv_out.clear();
  cache.pooled = temporalCompress(cache.hidden.back(), params.conv_taps,
                                  params.conv_bias, config.conv_stride,
                                  &cache.conv_out);

  const Index n = config.num_joints;
  cache.row_norms.resize(n);
  cache.unit_rows = Matrix::Zero(n, cache.pooled.cols());
  for (Index i = 0; i < n; ++i) {
    cache.row_norms[i] = cache.pooled.row(i).norm();
    if (cache.row_norms[i] > 0.0)
      cache.unit_rows.row(i) = cache.pooled.row(i) / cache.row_norms[i];
  }
  cache.sim = cache.unit_rows * cache.unit_rows.transpose();
  for (Index i = 0; i < n; ++i)
    cache.sim(i, i) = cache.row_norms[i] > 0.0 ? 1.0 : 0.0;
  cache.feature = spatialFeatureVector(cache.sim);
  return cache.feature;
}

Vector gcnSpatialCondition(const GcnParams& params, const Matrix& frames,
                           const PoseLayout& layout, GcnCache& cache) {
  require(layout.num_joints == params.config.num_joints,
          "gcnSpatialCondition: joint count mismatch");
  return gcnForward(params, frameNodeFeatures(frames, layout), cache);
}

void gcnBackward(const GcnParams& params, const GcnCache& cache,
                 const Vector& d_feature, GcnGrads& grads) {
  const GcnConfig& config = params.config;
  const Index n = config.num_joints;
  require(d_feature.size() == config.spatialDim(),
          "gcnBackward: feature gradient width mismatch");
  require(grads.layers.size() == params.layers.size(),
          "gcnBackward: gradient holder mismatch");

  // Similarity backward. Off-diagonal S_ij = u_hat_i . u_hat_j; diagonal
  // entries are constants (1 or 0) and carry no gradient.
  Matrix m = Matrix::Zero(n, n);
  Index at = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) {
      if (i != j) {
        m(i, j) = d_feature[at];
        m(j, i) = d_feature[at];
      }
      ++at;
    }
  Matrix d_unit = m * cache.unit_rows;

  // Row normalization backward; zero rows stay zero by convention.
  Matrix d_pooled = Matrix::Zero(n, cache.pooled.cols());
  for (Index i = 0; i < n; ++i) {
    double r = cache.row_norms[i];
    if (r > 0.0) {
      double along = d_unit.row(i).dot(cache.unit_rows.row(i));
      d_pooled.row(i) =
          (d_unit.row(i) - along * cache.unit_rows.row(i)) / r;
    }
  }

  // Mean pool backward.
  const Index windows = static_cast<Index>(cache.conv_out.size());
  Matrix d_out = d_pooled / static_cast<double>(windows);

  // Convolution backward into the last hidden layer.
  const std::vector<Matrix>& conv_in = cache.hidden.back();
  const Index t_frames = static_cast<Index>(conv_in.size());
  const bool clipped = t_frames < config.conv_kernel;
  const Index taps_used = clipped ? t_frames : config.conv_kernel;
  std::vector<Matrix> d_hidden(
      t_frames, Matrix::Zero(n, config.hidden_width));
  for (Index p = 0; p < windows; ++p) {
    const Index base = clipped ? 0 : p * config.conv_stride;
    for (Index dt = 0; dt < taps_used; ++dt) {
      grads.conv_taps[dt] += conv_in[base + dt].transpose() * d_out;
      d_hidden[base + dt] += d_out * params.conv_taps[dt].transpose();
    }
    grads.conv_bias += d_out.colwise().sum().transpose();
  }

  // Part-convolution layers, deepest first. A_hat is symmetric.
  for (int l = config.num_layers - 1; l >= 0; --l) {
    std::vector<Matrix> d_below(
        t_frames, Matrix::Zero(n, cache.hidden[l][0].cols()));
    for (Index t = 0; t < t_frames; ++t) {
      Matrix d_z = (cache.pre[l][t].array() > 0.0)
                       .select(d_hidden[t], Matrix::Zero(n, d_hidden[t].cols()));
      for (Index k = 0; k < params.subsets.count(); ++k) {
        Matrix propagated = params.subsets.normalized[k] * cache.hidden[l][t];
        grads.layers[l][k] += propagated.transpose() * d_z;
        d_below[t] +=
            params.subsets.normalized[k] * d_z * params.layers[l][k].transpose();
      }
    }
    d_hidden = std::move(d_below);
  }
}

}  // namespace textim
