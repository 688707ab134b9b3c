#pragma once

#include <textim/motion.hpp>
#include <textim/semantics.hpp>

#include "json.hpp"

#include <string>
#include <vector>

namespace textim {

// File helpers. Read failures and malformed content throw DataError.
std::string readTextFile(const std::string& path);
void writeTextFile(const std::string& path, const std::string& contents);
nlohmann::json readJsonFile(const std::string& path);
void writeJsonFile(const nlohmann::json& doc, const std::string& path);

// Motion container. Serialized bytes are deterministic: keys are sorted and
// doubles round-trip exactly.
nlohmann::json motionToJson(const MotionSequence& motion);
MotionSequence motionFromJson(const nlohmann::json& doc);
void writeMotion(const MotionSequence& motion, const std::string& path);
MotionSequence readMotion(const std::string& path);

// Interaction spec embedded in manifests and traces.
nlohmann::json specToJson(const InteractionSpec& spec);
InteractionSpec specFromJson(const nlohmann::json& doc);

// Named-tensor payload for checkpoints. Loading requires the exact tensor
// names and shapes of the receiving parameter struct.
nlohmann::json tensorsToJson(const std::vector<TensorRef>& tensors);
void tensorsFromJson(const nlohmann::json& doc,
                     const std::vector<TensorRef>& into);

// Self-describing checkpoint: config header plus named tensors.
void writeCheckpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<TensorRef>& tensors);
struct RawCheckpoint {
  nlohmann::json config;
  nlohmann::json tensors;
};
RawCheckpoint readCheckpoint(const std::string& path);

}  // namespace textim
