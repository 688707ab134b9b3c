#pragma once

#include <textim/motion.hpp>
#include <textim/semantics.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace textim {

// Procedural motion recipe: a sinusoid on the active parts' position and
// rotation dims over a standing base pose, low noise everywhere else.
// Caption templates substitute "{0}", "{1}", ... with the active phrases
// verbatim, so the caption always contains each labeled phrase.
struct SynthRecipe {
  std::string name;
  std::vector<InteractionPair> actives;  // empty: non-interactive
  double amplitude = 0.5;
  double frequency_hz = 1.5;
  double noise = 0.01;
  Index duration_frames = 24;
  Vector base_pose;  // full pose row; see standingBasePose
  std::vector<std::string> caption_templates;  // at least three phrasings

  bool isNone() const { return actives.empty(); }
  void validate(const PoseLayout& layout) const;
};

// Neutral standing pose: pelvis at nominal height, feet in contact,
// everything else zero.
Vector standingBasePose(const PoseLayout& layout);

// The six defaults: wave-left-arm, wave-right-arm, kick-left-leg,
// kick-right-leg, plus the two non-interactive recipes walk-in-place and
// stand. torsoBendRecipe is a seventh, available separately.
std::vector<SynthRecipe> defaultRecipes();
SynthRecipe torsoBendRecipe();

// Joint recipe moving both inputs' parts at once; the caption phrases both
// actions. Inputs must not share body parts.
SynthRecipe combineRecipes(const SynthRecipe& a, const SynthRecipe& b);

struct SynthOutput {
  MotionSequence motion;
  std::string caption;
  InteractionSpec spec;
};

// Deterministic per (recipe, seed). Velocity dims are exact finite
// differences of the stored positions (frame 0 is zero); the root velocity
// triplet differences the integrated root trajectory.
SynthOutput synthMotion(const SynthRecipe& recipe, std::uint64_t seed);

struct DatasetRecord {
  std::string path;  // motion file, relative to the dataset directory
  std::string caption;
  InteractionSpec spec;
  std::string split;  // "train" or "test"
};

// Writes count_per_recipe motions per recipe plus a manifest
// (manifest.jsonl: one record per line) under out_dir. A seeded fifth of
// each recipe's records (at least one) lands in the test split.
std::vector<DatasetRecord> buildDataset(const std::vector<SynthRecipe>& recipes,
                                        int count_per_recipe,
                                        std::uint64_t seed,
                                        const std::string& out_dir);

std::vector<DatasetRecord> loadManifest(const std::string& manifest_path);

}  // namespace textim
