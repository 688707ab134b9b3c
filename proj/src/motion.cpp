#include <textim/motion.hpp>

#include <algorithm>

namespace textim {

std::string partName(BodyPart part) {
  switch (part) {
    case BodyPart::Pelvis: return "pelvis";
    case BodyPart::LeftArm: return "left arm";
    case BodyPart::RightArm: return "right arm";
    case BodyPart::LeftLeg: return "left leg";
    case BodyPart::RightLeg: return "right leg";
    case BodyPart::Torso: return "torso";
  }
  throw std::invalid_argument("partName: unknown part");
}

std::optional<BodyPart> partFromName(const std::string& name) {
  for (BodyPart part : kAllParts)
    if (partName(part) == name) return part;
  return std::nullopt;
}

Index PoseLayout::positionDim(int joint, int axis) const {
  require(joint >= 1 && joint < num_joints, "positionDim: joint out of range");
  require(axis >= 0 && axis < 3, "positionDim: axis out of range");
  return joint_positions.begin + 3 * (joint - 1) + axis;
}

Index PoseLayout::velocityDim(int joint, int axis) const {
  require(joint >= 0 && joint < num_joints, "velocityDim: joint out of range");
  require(axis >= 0 && axis < 3, "velocityDim: axis out of range");
  return joint_velocities.begin + 3 * joint + axis;
}

Index PoseLayout::rotationDim(int joint, int comp) const {
  require(joint >= 1 && joint < num_joints, "rotationDim: joint out of range");
  require(comp >= 0 && comp < 6, "rotationDim: component out of range");
  return joint_rotations.begin + 6 * (joint - 1) + comp;
}

Index PoseLayout::contactDim(int contact_index) const {
  require(contact_index >= 0 &&
              contact_index < static_cast<int>(contact_joints.size()),
          "contactDim: index out of range");
  return foot_contacts.begin + contact_index;
}

PoseLayout buildLayout(int num_joints, std::vector<int> contact_joints) {
  require(num_joints >= 1, "buildLayout: need at least the root joint");
  for (int j : contact_joints)
    require(j >= 0 && j < num_joints, "buildLayout: contact joint out of range");

  PoseLayout layout;
  layout.num_joints = num_joints;
  layout.contact_joints = std::move(contact_joints);

  Index at = 0;
  auto take = [&at](Index size) {
    FeatureRange r{at, size};
    at += size;
    return r;
  };
  layout.root_angular_vel = take(1);
  layout.root_linear_vel = take(2);
  layout.root_height = take(1);
  layout.joint_positions = take(3 * Index(num_joints - 1));
  layout.joint_velocities = take(3 * Index(num_joints));
  layout.joint_rotations = take(6 * Index(num_joints - 1));
  layout.foot_contacts = take(Index(layout.contact_joints.size()));
  layout.total_dim = at;
  return layout;
}

bool Skeleton::isAncestor(int ancestor, int joint) const {
  require(ancestor >= 0 && ancestor < numJoints(), "isAncestor: bad ancestor");
  require(joint >= 0 && joint < numJoints(), "isAncestor: bad joint");
  for (int j = joint; j != -1; j = parents[j])
    if (j == ancestor) return true;
  return false;
}

std::vector<int> Skeleton::partJoints(BodyPart part) const {
  std::vector<int> joints;
  for (int j = 0; j < numJoints(); ++j)
    if (parts[j] == part) joints.push_back(j);
  return joints;
}

Skeleton canonicalSkeleton() {
  Skeleton s;
  s.joint_names = {
      "pelvis",        "left_hip",      "right_hip",     "spine1",
      "left_knee",     "right_knee",    "spine2",        "left_ankle",
      "right_ankle",   "spine3",        "left_foot",     "right_foot",
      "neck",          "left_collar",   "right_collar",  "head",
      "left_shoulder", "right_shoulder", "left_elbow",   "right_elbow",
      "left_wrist",    "right_wrist",
  };
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

  using P = BodyPart;
  s.parts = {P::Pelvis,                                   // pelvis
             P::LeftLeg,  P::RightLeg, P::Torso,          // hips, spine1
             P::LeftLeg,  P::RightLeg, P::Torso,          // knees, spine2
             P::LeftLeg,  P::RightLeg, P::Torso,          // ankles, spine3
             P::LeftLeg,  P::RightLeg,                    // feet
             P::Torso,    P::LeftArm,  P::RightArm,       // neck, collars
             P::Torso,                                    // head
             P::LeftArm,  P::RightArm,                    // shoulders
             P::LeftArm,  P::RightArm,                    // elbows
             P::LeftArm,  P::RightArm};                   // wrists
  return s;
}

const std::vector<int>& canonicalContactJoints() {
  static const std::vector<int> joints = {7, 10, 8, 11};
  return joints;
}

Index PartMask::popcount() const {
  Index n = 0;
  for (Index i = 0; i < bits.size(); ++i) n += bits[i] != 0;
  return n;
}

Vector PartMask::asDoubles() const {
  return bits.cast<double>();
}

BodyPart dimOwner(Index dim, const PoseLayout& layout, const Skeleton& skeleton) {
  require(skeleton.numJoints() == layout.num_joints,
          "dimOwner: layout and skeleton joint counts differ");
  require(dim >= 0 && dim < layout.total_dim, "dimOwner: dim out of range");

  if (dim < layout.joint_positions.begin) return skeleton.parts[0];
  if (layout.joint_positions.contains(dim)) {
    int joint = 1 + static_cast<int>((dim - layout.joint_positions.begin) / 3);
    return skeleton.parts[joint];
  }
  if (layout.joint_velocities.contains(dim)) {
    int joint = static_cast<int>((dim - layout.joint_velocities.begin) / 3);
    return skeleton.parts[joint];
  }
  if (layout.joint_rotations.contains(dim)) {
    int joint = 1 + static_cast<int>((dim - layout.joint_rotations.begin) / 6);
    return skeleton.parts[joint];
  }
  int contact = static_cast<int>(dim - layout.foot_contacts.begin);
  return skeleton.parts[layout.contact_joints[contact]];
}

PartMask partMask(const std::set<BodyPart>& parts, const PoseLayout& layout,
                  const Skeleton& skeleton) {
  PartMask mask;
  mask.parts = parts;
  mask.bits = IntVector::Zero(layout.total_dim);
  for (Index d = 0; d < layout.total_dim; ++d)
    if (parts.count(dimOwner(d, layout, skeleton))) mask.bits[d] = 1;
  return mask;
}

PartMask complement(const PartMask& mask, const PoseLayout& layout,
                    const Skeleton& skeleton) {
  require(mask.dim() == layout.total_dim, "complement: mask/layout mismatch");
  PartMask out;
  out.bits = IntVector::Zero(mask.dim());
  for (Index d = 0; d < mask.dim(); ++d) {
    out.bits[d] = mask.bits[d] ? 0 : 1;
    if (out.bits[d]) out.parts.insert(dimOwner(d, layout, skeleton));
  }
  return out;
}

Matrix gatherMasked(const Matrix& frames, const PartMask& mask) {
  require(frames.cols() == mask.dim(), "gatherMasked: dimension mismatch");
  Matrix out(frames.rows(), mask.popcount());
  Index at = 0;
  for (Index d = 0; d < mask.dim(); ++d)
    if (mask.bits[d]) out.col(at++) = frames.col(d);
  return out;
}

void scatterMasked(const Matrix& columns, const PartMask& mask, Matrix& into) {
  require(into.cols() == mask.dim(), "scatterMasked: dimension mismatch");
  require(columns.cols() == mask.popcount(), "scatterMasked: column count");
  require(columns.rows() == into.rows(), "scatterMasked: row count");
  Index at = 0;
  for (Index d = 0; d < mask.dim(); ++d)
    if (mask.bits[d]) into.col(d) = columns.col(at++);
}

Matrix applyMask(const Matrix& frames, const PartMask& mask) {
  require(frames.cols() == mask.dim(), "applyMask: dimension mismatch");
  Matrix out = Matrix::Zero(frames.rows(), frames.cols());
  for (Index d = 0; d < mask.dim(); ++d)
    if (mask.bits[d]) out.col(d) = frames.col(d);
  return out;
}

}  // namespace textim
