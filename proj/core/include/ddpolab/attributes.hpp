#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddpolab {

inline constexpr int kNumAttributes = 6;
inline constexpr int kNumArtifacts = 4;
inline constexpr int kNumPrompts = 32;

// Bit order is fixed: [MEL, NV, hair, gel, ink, ruler]. Exactly one of the
// two disease bits is set; artifact bits are free.
struct AttributeVector {
  std::array<std::uint8_t, kNumAttributes> bits{};

  bool valid() const;
  bool is_mel() const { return bits[0] != 0; }
  bool artifact(int k) const { return bits[2 + k] != 0; }
  int artifact_count() const;

  // Canonical index in 0..31: disease picks the 16-block (MEL first), the
  // low four bits are (hair, gel, ink, ruler).
  int index() const;
  static AttributeVector from_index(int index);
  static AttributeVector make(bool mel, bool hair, bool gel, bool ink, bool ruler);

  bool operator==(const AttributeVector&) const = default;
};

extern const std::array<const char*, kNumAttributes> kAttributeNames;
extern const std::array<const char*, kNumArtifacts> kArtifactPhrases;

// Raised by parse_prompt; the message names the offending token and its
// character offset in the input.
class PromptError : public std::runtime_error {
 public:
  PromptError(const std::string& message, std::string token, std::size_t offset)
      : std::runtime_error(message), token_(std::move(token)), offset_(offset) {}

  const std::string& token() const { return token_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string token_;
  std::size_t offset_;
};

// Grammar (case-insensitive): "a dermoscopic image with <disease>
// [showing <artifact> {and <artifact>}]". Diseases: melanoma, melanocytic
// nevus. Artifacts: hairs, gel bubbles, ink, ruler.
AttributeVector parse_prompt(const std::string& text);

// Canonical phrasing; artifacts always in (hairs, gel bubbles, ink, ruler)
// order. parse_prompt(format_prompt(a)) == a for every valid a.
std::string format_prompt(const AttributeVector& attrs);

// All 32 valid vectors in canonical index order.
std::vector<AttributeVector> all_attribute_vectors();

}  // namespace ddpolab
