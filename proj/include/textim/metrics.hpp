#pragma once

#include <textim/motion.hpp>
#include <textim/text_encoder.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace textim {

// World-space joint positions; joint j occupies columns [3j, 3j+3).
struct JointPositions {
  Matrix positions;  // T x (3 * num_joints)
  Index num_joints = 0;

  Index numFrames() const { return positions.rows(); }
  Eigen::Vector3d at(Index t, Index j) const {
    return positions.block<1, 3>(t, 3 * j).transpose();
  }
};

// Decodes the pose representation: root heading integrates the angular
// velocity, ground-plane position integrates the heading-rotated linear
// velocity (both scaled by 1/fps), height is read directly; every other
// joint adds its root-relative triplet.
JointPositions toJointPositions(const MotionSequence& motion);

// Mean over frames and joints of Euclidean distance between matched joints.
double mpjpe(const JointPositions& pred, const JointPositions& gt);

// Same, on frame-difference velocities; requires at least two frames.
double mpvpe(const JointPositions& pred, const JointPositions& gt);

// MPJPE restricted to a joint subset.
double jointSubsetJpe(const JointPositions& pred, const JointPositions& gt,
                      const std::vector<int>& subset);

const std::vector<int>& handJoints();  // wrists
const std::vector<int>& footJoints();  // ankles + feet

// For each motion, rank its own text among pool_size-1 seeded distractors
// by Euclidean distance; ties break by a seeded shuffle. Returns the
// fraction ranked in the top 3.
double rPrecisionTop3(const std::vector<Vector>& motion_embeddings,
                      const std::vector<Vector>& text_embeddings,
                      int pool_size, std::uint64_t seed);

// Mean Euclidean distance between matched embedding pairs.
double mmDist(const std::vector<Vector>& motion_embeddings,
              const std::vector<Vector>& text_embeddings);

// Mean per-frame displacement of a part's joints, from the root-relative
// position dims.
double partEnergy(const MotionSequence& motion, const Skeleton& skeleton,
                  BodyPart part);

// Fraction of motions whose instructed limb has strictly maximal energy
// among the four limbs; ties and losses score zero.
double partEnergyAccuracy(const std::vector<MotionSequence>& motions,
                          const Skeleton& skeleton,
                          const std::vector<BodyPart>& instructed);

// Pluggable motion embedder for the retrieval metrics.
class MotionEncoder {
 public:
  virtual ~MotionEncoder() = default;
  virtual Index width() const = 0;
  virtual Vector encode(const MotionSequence& motion) const = 0;
};

// Linear map over the L2-normalized per-dim mean and standard deviation
// pooled across frames; the normalization keeps training well-conditioned
// whatever the data scale.
class PooledLinearMotionEncoder : public MotionEncoder {
 public:
  explicit PooledLinearMotionEncoder(Matrix weights);

  Index width() const override { return weights_.rows(); }
  Vector encode(const MotionSequence& motion) const override;
  const Matrix& weights() const { return weights_; }

  static Vector pooledFeatures(const MotionSequence& motion);

 private:
  Matrix weights_;  // width x (2 * pose_dim)
};

// Full-batch contrastive loop: pulls matched motion/text pairs together and
// pushes each motion from the mean of the other texts.
PooledLinearMotionEncoder trainMotionEncoder(
    const std::vector<MotionSequence>& motions,
    const std::vector<Vector>& text_embeddings, int epochs, double lr,
    std::uint64_t seed);

struct MetricValue {
  std::string name;
  double value = 0.0;
  Index count = 0;         // items measured
  std::uint64_t seed = 0;  // 0 when the metric is deterministic
};

// One line per metric: name, value, count, seed.
std::string formatMetricReport(const std::vector<MetricValue>& values);

}  // namespace textim
