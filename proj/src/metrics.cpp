#include <textim/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace textim {

JointPositions toJointPositions(const MotionSequence& motion) {
  const PoseLayout& layout = motion.layout;
  require(motion.frames.cols() == layout.total_dim,
          "toJointPositions: pose width mismatch");
  require(motion.frames.rows() >= 1, "toJointPositions: empty motion");
  require(motion.fps > 0.0, "toJointPositions: fps must be positive");
  require(motion.frames.allFinite(), "toJointPositions: non-finite motion");

  const Index t_frames = motion.frames.rows();
  const int n = layout.num_joints;
  const double dt = 1.0 / motion.fps;

  JointPositions out;
  out.num_joints = n;
  out.positions.resize(t_frames, 3 * n);

  double theta = 0.0, x = 0.0, z = 0.0;
  for (Index t = 0; t < t_frames; ++t) {
    theta += motion.frames(t, layout.root_angular_vel.begin) * dt;
    const double vx = motion.frames(t, layout.root_linear_vel.begin);
    const double vz = motion.frames(t, layout.root_linear_vel.begin + 1);
    x += (std::cos(theta) * vx - std::sin(theta) * vz) * dt;
    z += (std::sin(theta) * vx + std::cos(theta) * vz) * dt;
    const double y = motion.frames(t, layout.root_height.begin);

    out.positions(t, 0) = x;
    out.positions(t, 1) = y;
    out.positions(t, 2) = z;
    for (int j = 1; j < n; ++j) {
      out.positions(t, 3 * j + 0) = x + motion.frames(t, layout.positionDim(j, 0));
      out.positions(t, 3 * j + 1) = y + motion.frames(t, layout.positionDim(j, 1));
      out.positions(t, 3 * j + 2) = z + motion.frames(t, layout.positionDim(j, 2));
    }
  }
  return out;
}

namespace {

void checkMatched(const JointPositions& pred, const JointPositions& gt,
                  const char* what) {
  require(pred.num_joints == gt.num_joints,
          std::string(what) + ": joint count mismatch");
  require(pred.positions.rows() == gt.positions.rows() &&
              pred.positions.cols() == gt.positions.cols(),
          std::string(what) + ": shape mismatch");
  require(pred.positions.rows() >= 1, std::string(what) + ": empty input");
}

double meanJointDistance(const Matrix& a, const Matrix& b, Index num_joints,
                         const std::vector<int>& subset) {
  double total = 0.0;
  for (Index t = 0; t < a.rows(); ++t)
    for (int j : subset)
      total += (a.block<1, 3>(t, 3 * j) - b.block<1, 3>(t, 3 * j)).norm();
  return total / (static_cast<double>(a.rows()) *
                  static_cast<double>(subset.size()));
}

std::vector<int> allJoints(Index n) {
  std::vector<int> joints(n);
  for (Index j = 0; j < n; ++j) joints[j] = static_cast<int>(j);
  return joints;
}

}  // namespace

double mpjpe(const JointPositions& pred, const JointPositions& gt) {
  checkMatched(pred, gt, "mpjpe");
  return meanJointDistance(pred.positions, gt.positions, pred.num_joints,
                           allJoints(pred.num_joints));
}

double mpvpe(const JointPositions& pred, const JointPositions& gt) {
  checkMatched(pred, gt, "mpvpe");
  require(pred.positions.rows() >= 2, "mpvpe: need at least two frames");
  const Index t_frames = pred.positions.rows();
  Matrix pv = pred.positions.bottomRows(t_frames - 1) -
              pred.positions.topRows(t_frames - 1);
  Matrix gv = gt.positions.bottomRows(t_frames - 1) -
              gt.positions.topRows(t_frames - 1);
  return meanJointDistance(pv, gv, pred.num_joints,
                           allJoints(pred.num_joints));
}

double jointSubsetJpe(const JointPositions& pred, const JointPositions& gt,
                      const std::vector<int>& subset) {
  checkMatched(pred, gt, "jointSubsetJpe");
  require(!subset.empty(), "jointSubsetJpe: empty joint subset");
  for (int j : subset)
    require(j >= 0 && j < pred.num_joints, "jointSubsetJpe: joint out of range");
  return meanJointDistance(pred.positions, gt.positions, pred.num_joints,
                           subset);
}

const std::vector<int>& handJoints() {
  static const std::vector<int> joints{20, 21};
  return joints;
}

const std::vector<int>& footJoints() {
  static const std::vector<int> joints{7, 8, 10, 11};
  return joints;
}

double rPrecisionTop3(const std::vector<Vector>& motion_embeddings,
                      const std::vector<Vector>& text_embeddings,
                      int pool_size, std::uint64_t seed) {
  const int n = static_cast<int>(motion_embeddings.size());
  require(n >= 1, "rPrecisionTop3: empty embedding lists");
  require(text_embeddings.size() == motion_embeddings.size(),
          "rPrecisionTop3: list length mismatch");
  require(pool_size >= 1, "rPrecisionTop3: pool must be positive");
  require(pool_size <= n, "rPrecisionTop3: pool larger than the list");

  Rng base(seed);
  double hits = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng = base.derive(static_cast<std::uint64_t>(i));

    // Distractors: pool_size - 1 texts drawn without replacement.
    std::vector<int> others;
    others.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    for (int k = 0; k < pool_size - 1; ++k) {
      int pick = rng.uniformInt(k, static_cast<int>(others.size()) - 1);
      std::swap(others[k], others[pick]);
    }

    // Ranks by distance; equal distances resolve by a seeded random key.
    const double true_dist = (motion_embeddings[i] - text_embeddings[i]).norm();
    const double true_key = rng.uniform();
    int better = 0;
    for (int k = 0; k < pool_size - 1; ++k) {
      double dist = (motion_embeddings[i] - text_embeddings[others[k]]).norm();
      double key = rng.uniform();
      if (dist < true_dist || (dist == true_dist && key < true_key)) ++better;
    }
    if (better < 3) hits += 1.0;
  }
  return hits / static_cast<double>(n);
}

double mmDist(const std::vector<Vector>& motion_embeddings,
              const std::vector<Vector>& text_embeddings) {
  require(!motion_embeddings.empty(), "mmDist: empty embedding lists");
  require(motion_embeddings.size() == text_embeddings.size(),
          "mmDist: list length mismatch");
  double total = 0.0;
  for (size_t i = 0; i < motion_embeddings.size(); ++i) {
    require(motion_embeddings[i].size() == text_embeddings[i].size(),
            "mmDist: embedding width mismatch");
    total += (motion_embeddings[i] - text_embeddings[i]).norm();
  }
  return total / static_cast<double>(motion_embeddings.size());
}

double partEnergy(const MotionSequence& motion, const Skeleton& skeleton,
                  BodyPart part) {
  const PoseLayout& layout = motion.layout;
  require(layout.num_joints == skeleton.numJoints(),
          "partEnergy: skeleton does not match layout");
  require(motion.frames.cols() == layout.total_dim,
          "partEnergy: pose width mismatch");
  const Index t_frames = motion.frames.rows();
  require(t_frames >= 1, "partEnergy: empty motion");
  if (t_frames == 1) return 0.0;

  std::vector<int> joints = skeleton.partJoints(part);
  require(!joints.empty(), "partEnergy: part has no joints");
  double total = 0.0;
  Index count = 0;
  for (Index t = 1; t < t_frames; ++t) {
    for (int j : joints) {
      if (j == 0) continue;  // the root carries no relative position dims
      Eigen::Vector3d delta;
      for (int a = 0; a < 3; ++a)
        delta[a] = motion.frames(t, layout.positionDim(j, a)) -
                   motion.frames(t - 1, layout.positionDim(j, a));
      total += delta.norm();
      ++count;
    }
  }
  require(count > 0, "partEnergy: no measurable joints in part");
  return total / static_cast<double>(count);
}

double partEnergyAccuracy(const std::vector<MotionSequence>& motions,
                          const Skeleton& skeleton,
                          const std::vector<BodyPart>& instructed) {
  require(!motions.empty(), "partEnergyAccuracy: empty motion set");
  require(motions.size() == instructed.size(),
          "partEnergyAccuracy: label count mismatch");
  static const BodyPart kLimbs[4] = {BodyPart::LeftArm, BodyPart::RightArm,
                                     BodyPart::LeftLeg, BodyPart::RightLeg};
  double hits = 0.0;
  for (size_t i = 0; i < motions.size(); ++i) {
    bool is_limb = false;
    for (BodyPart limb : kLimbs) is_limb = is_limb || limb == instructed[i];
    require(is_limb, "partEnergyAccuracy: instructed part must be a limb");

    double own = 0.0;
    bool strict_max = true;
    for (BodyPart limb : kLimbs)
      if (limb == instructed[i]) own = partEnergy(motions[i], skeleton, limb);
    for (BodyPart limb : kLimbs) {
      if (limb == instructed[i]) continue;
      if (partEnergy(motions[i], skeleton, limb) >= own) strict_max = false;
    }
    if (strict_max) hits += 1.0;
  }
  return hits / static_cast<double>(motions.size());
}

PooledLinearMotionEncoder::PooledLinearMotionEncoder(Matrix weights)
    : weights_(std::move(weights)) {
  require(weights_.rows() >= 1 && weights_.cols() >= 2,
          "motion encoder: weight matrix too small");
  require(weights_.cols() % 2 == 0,
          "motion encoder: weight width must cover mean and deviation");
}

Vector PooledLinearMotionEncoder::pooledFeatures(const MotionSequence& motion) {
  const Index t_frames = motion.frames.rows();
  require(t_frames >= 1, "motion encoder: empty motion");
  const Index d = motion.frames.cols();
  Vector mean = motion.frames.colwise().mean();
  Vector dev(d);
  for (Index c = 0; c < d; ++c) {
    double var =
        (motion.frames.col(c).array() - mean[c]).square().sum() / t_frames;
    dev[c] = std::sqrt(var);
  }
  Vector features(2 * d);
  features << mean, dev;
  return features;
}

namespace {

Vector unitFeatures(Vector features) {
  double norm = features.norm();
  if (norm > 0.0) features /= norm;
  return features;
}

}  // namespace

Vector PooledLinearMotionEncoder::encode(const MotionSequence& motion) const {
  Vector features = unitFeatures(pooledFeatures(motion));
  require(features.size() == weights_.cols(),
          "motion encoder: pose width does not match the trained weights");
  return weights_ * features;
}

PooledLinearMotionEncoder trainMotionEncoder(
    const std::vector<MotionSequence>& motions,
    const std::vector<Vector>& text_embeddings, int epochs, double lr,
    std::uint64_t seed) {
  const size_t n = motions.size();
  require(n >= 2, "trainMotionEncoder: need at least two pairs");
  require(text_embeddings.size() == n,
          "trainMotionEncoder: label count mismatch");
  require(epochs >= 1 && lr > 0.0, "trainMotionEncoder: bad hyperparameters");

  const Index width = text_embeddings[0].size();
  std::vector<Vector> features;
  features.reserve(n);
  for (const MotionSequence& motion : motions)
    features.push_back(
        unitFeatures(PooledLinearMotionEncoder::pooledFeatures(motion)));
  const Index feat_dim = features[0].size();
  for (size_t i = 0; i < n; ++i) {
    require(text_embeddings[i].size() == width,
            "trainMotionEncoder: ragged text widths");
    require(features[i].size() == feat_dim,
            "trainMotionEncoder: ragged pose widths");
  }

  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feat_dim));
  Matrix w(width, feat_dim);
  for (Index j = 0; j < feat_dim; ++j)
    for (Index i = 0; i < width; ++i)
      w(i, j) = (2.0 * rng.uniform() - 1.0) * scale;

  // Pull matched pairs together; hinge-push each motion away from the
  // other texts within a unit margin.
  const double margin = 1.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix grad = Matrix::Zero(width, feat_dim);
    for (size_t i = 0; i < n; ++i) {
      Vector emb = w * features[i];
      grad += 2.0 * (emb - text_embeddings[i]) * features[i].transpose();
      for (size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        Vector gap = emb - text_embeddings[j];
        double dist = gap.norm();
        if (dist < margin && dist > 1e-12)
          grad -= (2.0 * (margin - dist) / dist / static_cast<double>(n - 1)) *
                  gap * features[i].transpose();
      }
    }
    w -= (lr / static_cast<double>(n)) * grad;
  }
  return PooledLinearMotionEncoder(std::move(w));
}

std::string formatMetricReport(const std::vector<MetricValue>& values) {
  std::ostringstream out;
  for (const MetricValue& v : values) {
    out << v.name << " value=" << v.value << " count=" << v.count
        << " seed=" << v.seed << "\n";
  }
  return out.str();
}

}  // namespace textim
