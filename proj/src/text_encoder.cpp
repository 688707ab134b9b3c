#include <textim/text_encoder.hpp>

#include <cctype>

namespace textim {

std::vector<std::string> wordTokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

HashedBowEncoder::HashedBowEncoder(Index width) : width_(width) {
  require(width >= 1, "HashedBowEncoder: width must be positive");
}

Vector HashedBowEncoder::encode(const std::string& text) const {
  Vector v = Vector::Zero(width_);
  for (const std::string& token : wordTokens(text)) {
    std::uint64_t h = fnv1a64(token);
    Index bucket = static_cast<Index>(h % static_cast<std::uint64_t>(width_));
    double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
    v[bucket] += sign;
  }
  double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

}  // namespace textim
