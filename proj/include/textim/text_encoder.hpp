#pragma once

#include <textim/types.hpp>

#include <string>
#include <vector>

namespace textim {

// Text to fixed-width embedding. Empty text maps to the all-zeros vector;
// anything else is L2-normalized. Implementations must be deterministic.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Index width() const = 0;
  virtual Vector encode(const std::string& text) const = 0;
};

// Offline default: signed feature-hashed bag of words.
class HashedBowEncoder : public TextEncoder {
 public:
  explicit HashedBowEncoder(Index width = 64);
  Index width() const override { return width_; }
  Vector encode(const std::string& text) const override;

 private:
  Index width_;
};

// Lowercased alphanumeric runs.
std::vector<std::string> wordTokens(const std::string& text);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace textim
