#include <textim/io.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace textim {

std::string readTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw DataError("read failed: " + path);
  return buffer.str();
}

void writeTextFile(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << contents;
  out.flush();
  if (!out) throw DataError("write failed: " + path);
}

nlohmann::json readJsonFile(const std::string& path) {
  nlohmann::json doc = nlohmann::json::parse(readTextFile(path), nullptr,
                                             /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw DataError("malformed JSON in " + path);
  return doc;
}

void writeJsonFile(const nlohmann::json& doc, const std::string& path) {
  writeTextFile(path, doc.dump(2) + "\n");
}

namespace {

constexpr const char* kMotionFormat = "textim-motion";
constexpr const char* kCheckpointFormat = "textim-checkpoint";
constexpr int kFormatVersion = 1;

constexpr const char* kDimOrder =
    "root_angular_vel(1), root_linear_vel(2), root_height(1), "
    "joint_positions 3(J-1), joint_velocities 3J, joint_rotations 6(J-1), "
    "foot_contacts(|C|)";

void checkField(const nlohmann::json& doc, const char* field,
                const std::string& what) {
  if (!doc.contains(field))
    throw DataError(what + ": missing field '" + field + "'");
}

}  // namespace

nlohmann::json motionToJson(const MotionSequence& motion) {
  nlohmann::json frames = nlohmann::json::array();
  for (Index t = 0; t < motion.frames.rows(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (Index d = 0; d < motion.frames.cols(); ++d)
      row.push_back(motion.frames(t, d));
    frames.push_back(std::move(row));
  }
  return nlohmann::json{
      {"format", kMotionFormat},
      {"version", kFormatVersion},
      {"fps", motion.fps},
      {"num_joints", motion.layout.num_joints},
      {"contact_joints", motion.layout.contact_joints},
      {"dim_order", kDimOrder},
      {"frames", std::move(frames)},
  };
}

namespace {

MotionSequence motionFromJsonChecked(const nlohmann::json& doc,
                                     const std::string& what) {
  for (const char* field :
       {"format", "version", "fps", "num_joints", "contact_joints", "frames"})
    checkField(doc, field, what);
  if (doc["format"] != kMotionFormat || doc["version"] != kFormatVersion)
    throw DataError(what + ": unknown format or version");

  int num_joints = doc["num_joints"].get<int>();
  std::vector<int> contacts = doc["contact_joints"].get<std::vector<int>>();
  PoseLayout layout;
  try {
    layout = buildLayout(num_joints, contacts);
  } catch (const std::invalid_argument& err) {
    throw DataError(what + ": " + err.what());
  }

  const nlohmann::json& frames = doc["frames"];
  if (!frames.is_array()) throw DataError(what + ": frames must be an array");

  MotionSequence motion;
  motion.layout = layout;
  motion.fps = doc["fps"].get<double>();
  if (!(motion.fps > 0)) throw DataError(what + ": fps must be positive");
  motion.frames.resize(static_cast<Index>(frames.size()), layout.total_dim);
  for (Index t = 0; t < motion.frames.rows(); ++t) {
    const nlohmann::json& row = frames[static_cast<size_t>(t)];
    if (!row.is_array() ||
        static_cast<Index>(row.size()) != layout.total_dim)
      throw DataError(what + ": frame " + std::to_string(t) +
                      " has wrong width");
    for (Index d = 0; d < layout.total_dim; ++d) {
      double v = row[static_cast<size_t>(d)].get<double>();
      if (!std::isfinite(v))
        throw DataError(what + ": non-finite value in frame " +
                        std::to_string(t));
      motion.frames(t, d) = v;
    }
  }
  return motion;
}

}  // namespace

// Wrong JSON value types surface as the parse library's own exceptions;
// translate them so callers see one error type for malformed content.
MotionSequence motionFromJson(const nlohmann::json& doc) {
  const std::string what = "motion document";
  try {
    return motionFromJsonChecked(doc, what);
  } catch (const nlohmann::json::exception& err) {
    throw DataError(what + ": " + err.what());
  }
}

void writeMotion(const MotionSequence& motion, const std::string& path) {
  writeJsonFile(motionToJson(motion), path);
}

MotionSequence readMotion(const std::string& path) {
  return motionFromJson(readJsonFile(path));
}

nlohmann::json specToJson(const InteractionSpec& spec) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const InteractionPair& pair : spec.pairs)
    pairs.push_back(nlohmann::json::array({partName(pair.part), pair.phrase}));
  return nlohmann::json{{"pairs", std::move(pairs)},
                        {"residual", spec.residual_text}};
}

InteractionSpec specFromJson(const nlohmann::json& doc) {
  const std::string what = "interaction spec";
  try {
    checkField(doc, "pairs", what);
    checkField(doc, "residual", what);
    InteractionSpec spec;
    for (const nlohmann::json& entry : doc["pairs"]) {
      if (!entry.is_array() || entry.size() != 2)
        throw DataError(what + ": each pair must be [part, phrase]");
      auto part = partFromName(entry[0].get<std::string>());
      if (!part)
        throw DataError(what + ": unknown part '" +
                        entry[0].get<std::string>() + "'");
      spec.pairs.push_back({*part, entry[1].get<std::string>()});
    }
    spec.residual_text = doc["residual"].get<std::string>();
    return spec;
  } catch (const nlohmann::json::exception& err) {
    throw DataError(what + ": " + err.what());
  }
}

nlohmann::json tensorsToJson(const std::vector<TensorRef>& tensors) {
  nlohmann::json doc = nlohmann::json::object();
  for (const TensorRef& tensor : tensors) {
    if (doc.contains(tensor.name))
      throw DataError("duplicate tensor name: " + tensor.name);
    nlohmann::json data = nlohmann::json::array();
    for (Index i = 0; i < tensor.size(); ++i) data.push_back(tensor.data[i]);
    doc[tensor.name] = {
        {"rows", tensor.rows}, {"cols", tensor.cols}, {"data", std::move(data)}};
  }
  return doc;
}

void tensorsFromJson(const nlohmann::json& doc,
                     const std::vector<TensorRef>& into) {
  if (!doc.is_object()) throw DataError("tensor payload must be an object");
  if (doc.size() != into.size())
    throw DataError("tensor count mismatch: file has " +
                    std::to_string(doc.size()) + ", expected " +
                    std::to_string(into.size()));
  try {
    for (const TensorRef& tensor : into) {
      if (!doc.contains(tensor.name))
        throw DataError("missing tensor: " + tensor.name);
      const nlohmann::json& entry = doc[tensor.name];
      for (const char* field : {"rows", "cols", "data"})
        checkField(entry, field, "tensor " + tensor.name);
      if (entry["rows"].get<Index>() != tensor.rows ||
          entry["cols"].get<Index>() != tensor.cols)
        throw DataError("shape mismatch for tensor " + tensor.name);
      const nlohmann::json& data = entry["data"];
      if (static_cast<Index>(data.size()) != tensor.size())
        throw DataError("data length mismatch for tensor " + tensor.name);
      for (Index i = 0; i < tensor.size(); ++i) {
        double v = data[static_cast<size_t>(i)].get<double>();
        if (!std::isfinite(v))
          throw DataError("non-finite value in tensor " + tensor.name);
        tensor.data[i] = v;
      }
    }
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("tensor payload: ") + err.what());
  }
}

void writeCheckpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<TensorRef>& tensors) {
  nlohmann::json doc{
      {"format", kCheckpointFormat},
      {"version", kFormatVersion},
      {"config", config},
      {"tensors", tensorsToJson(tensors)},
  };
  writeJsonFile(doc, path);
}

RawCheckpoint readCheckpoint(const std::string& path) {
  nlohmann::json doc = readJsonFile(path);
  const std::string what = "checkpoint " + path;
  for (const char* field : {"format", "version", "config", "tensors"})
    checkField(doc, field, what);
  if (doc["format"] != kCheckpointFormat || doc["version"] != kFormatVersion)
    throw DataError(what + ": unknown format or version");
  return RawCheckpoint{doc["config"], doc["tensors"]};
}

}  // namespace textim
