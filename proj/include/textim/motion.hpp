#pragma once

#include <textim/types.hpp>

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace textim {

// The six body parts a pose dimension can belong to. Pelvis is its own part
// for masking even though the graph merges it into the torso subset.
enum class BodyPart : int {
  Pelvis = 0,
  LeftArm,
  RightArm,
  LeftLeg,
  RightLeg,
  Torso,
};

inline constexpr std::array<BodyPart, 6> kAllParts = {
    BodyPart::Pelvis,   BodyPart::LeftArm,  BodyPart::RightArm,
    BodyPart::LeftLeg,  BodyPart::RightLeg, BodyPart::Torso,
};

std::string partName(BodyPart part);
std::optional<BodyPart> partFromName(const std::string& name);

// Half-open column range [begin, begin + size) inside a pose vector.
struct FeatureRange {
  Index begin = 0;
  Index size = 0;

  Index end() const { return begin + size; }
  bool contains(Index dim) const { return dim >= begin && dim < end(); }
};

// Column layout of one pose frame. Groups appear in this fixed order:
//   root angular velocity (1), root linear velocity (2), root height (1),
//   joint positions 3(J-1), joint velocities 3J, joint rotations 6(J-1),
//   foot contacts (one per contact joint).
// Positions and rotations skip the root; velocities include it.
struct PoseLayout {
  int num_joints = 0;
  std::vector<int> contact_joints;

  FeatureRange root_angular_vel;
  FeatureRange root_linear_vel;
  FeatureRange root_height;
  FeatureRange joint_positions;
  FeatureRange joint_velocities;
  FeatureRange joint_rotations;
  FeatureRange foot_contacts;
  Index total_dim = 0;

  // joint >= 1: the root has no entry in the position block.
  Index positionDim(int joint, int axis) const;
  // joint >= 0: velocities cover every joint, root first.
  Index velocityDim(int joint, int axis) const;
  // joint >= 1, comp in [0, 6): continuous 6d rotation block.
  Index rotationDim(int joint, int comp) const;
  Index contactDim(int contact_index) const;
};

PoseLayout buildLayout(int num_joints, std::vector<int> contact_joints);

// Kinematic tree plus the part label of every joint.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parents;  // parents[0] == -1, parents[j] < j
  std::vector<BodyPart> parts;

  int numJoints() const { return static_cast<int>(parents.size()); }
  bool isAncestor(int ancestor, int joint) const;
  std::vector<int> partJoints(BodyPart part) const;
};

// 22-joint humanoid with feet contact joints {7, 10, 8, 11}.
Skeleton canonicalSkeleton();
const std::vector<int>& canonicalContactJoints();

// Motion clip: one pose vector per row.
struct MotionSequence {
  Matrix frames;  // T x layout.total_dim
  PoseLayout layout;
  double fps = 20.0;

  Index numFrames() const { return frames.rows(); }
};

// Per-dimension 0/1 mask over a pose vector, plus the part set it encodes.
struct PartMask {
  IntVector bits;
  std::set<BodyPart> parts;

  Index dim() const { return bits.size(); }
  Index popcount() const;
  bool empty() const { return parts.empty(); }
  Vector asDoubles() const;
};

// Marks every dimension owned by any part in `parts`. Ownership: the four
// root dims and the root velocity triplet belong to the pelvis; position,
// velocity and rotation triplets belong to their joint's part; a contact dim
// belongs to its contact joint's part.
PartMask partMask(const std::set<BodyPart>& parts, const PoseLayout& layout,
                  const Skeleton& skeleton);

// Part owning one pose dimension.
BodyPart dimOwner(Index dim, const PoseLayout& layout, const Skeleton& skeleton);

PartMask complement(const PartMask& mask, const PoseLayout& layout,
                    const Skeleton& skeleton);

// Columns of `frames` where mask bit is set, original order kept.
Matrix gatherMasked(const Matrix& frames, const PartMask& mask);

// Inverse of gatherMasked: writes `columns` back into the masked slots.
void scatterMasked(const Matrix& columns, const PartMask& mask, Matrix& into);

// frames with non-mask columns zeroed.
Matrix applyMask(const Matrix& frames, const PartMask& mask);

}  // namespace textim
