#include "ddpolab/attributes.hpp"

#include <cctype>

namespace ddpolab {

const std::array<const char*, kNumAttributes> kAttributeNames = {
    "MEL", "NV", "hair", "gel", "ink", "ruler"};

const std::array<const char*, kNumArtifacts> kArtifactPhrases = {
    "hairs", "gel bubbles", "ink", "ruler"};

bool AttributeVector::valid() const {
  for (auto b : bits) {
    if (b > 1) return false;
  }
  return bits[0] + bits[1] == 1;
}

int AttributeVector::artifact_count() const {
  return bits[2] + bits[3] + bits[4] + bits[5];
}

int AttributeVector::index() const {
  int mask = 0;
  for (int k = 0; k < kNumArtifacts; ++k) {
    if (bits[2 + k]) mask |= 1 << k;
  }
  return (is_mel() ? 0 : 16) + mask;
}

AttributeVector AttributeVector::from_index(int index) {
  if (index < 0 || index >= kNumPrompts) {
    throw std::invalid_argument("attribute index out of range: " + std::to_string(index));
  }
  AttributeVector a;
  const bool mel = index < 16;
  a.bits[0] = mel ? 1 : 0;
  a.bits[1] = mel ? 0 : 1;
  const int mask = index & 15;
  for (int k = 0; k < kNumArtifacts; ++k) {
    a.bits[2 + k] = (mask >> k) & 1;
  }
  return a;
}

AttributeVector AttributeVector::make(bool mel, bool hair, bool gel, bool ink, bool ruler) {
  AttributeVector a;
  a.bits = {static_cast<std::uint8_t>(mel), static_cast<std::uint8_t>(!mel),
            static_cast<std::uint8_t>(hair), static_cast<std::uint8_t>(gel),
            static_cast<std::uint8_t>(ink), static_cast<std::uint8_t>(ruler)};
  return a;
}

namespace {

struct Token {
  std::string word;
  std::size_t offset;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    std::string word;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    out.push_back({std::move(word), start});
  }
  return out;
}

[[noreturn]] void fail(const std::string& what, const Token& tok) {
  throw PromptError(what + " \"" + tok.word + "\" at offset " + std::to_string(tok.offset),
                    tok.word, tok.offset);
}

[[noreturn]] void fail_end(const std::string& expected, std::size_t offset) {
  throw PromptError("prompt ends early, expected " + expected + " at offset " +
                        std::to_string(offset),
                    "", offset);
}

class Cursor {
 public:
  explicit Cursor(const std::string& text) : toks_(tokenize(text)), end_offset_(text.size()) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token& peek() const { return toks_[pos_]; }
  std::size_t offset() const { return done() ? end_offset_ : toks_[pos_].offset; }

  const Token& take(const std::string& expected) {
    if (done()) fail_end(expected, end_offset_);
    return toks_[pos_++];
  }

  void expect_word(const std::string& word) {
    const Token& t = take("\"" + word + "\"");
    if (t.word != word) fail("expected \"" + word + "\", found", t);
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t end_offset_;
};

// Consumes one artifact phrase and returns its index in canonical order.
int take_artifact(Cursor& cur) {
  const Token t = cur.take("an artifact name");
  if (t.word == "hairs") return 0;
  if (t.word == "gel") {
    const Token t2 = cur.take("\"bubbles\"");
    if (t2.word != "bubbles") fail("expected \"bubbles\" after \"gel\", found", t2);
    return 1;
  }
  if (t.word == "ink") return 2;
  if (t.word == "ruler") return 3;
  fail("unknown artifact", t);
}

}  // namespace

AttributeVector parse_prompt(const std::string& text) {
  Cursor cur(text);
  cur.expect_word("a");
  cur.expect_word("dermoscopic");
  cur.expect_word("image");
  cur.expect_word("with");

  AttributeVector out{};
  const Token d = cur.take("a disease name");
  if (d.word == "melanoma") {
    out.bits[0] = 1;
  } else if (d.word == "melanocytic") {
    const Token d2 = cur.take("\"nevus\"");
    if (d2.word != "nevus") fail("expected \"nevus\" after \"melanocytic\", found", d2);
    out.bits[1] = 1;
  } else {
    fail("unknown disease", d);
  }

  if (!cur.done()) {
    cur.expect_word("showing");
    bool more = true;
    while (more) {
      const std::size_t art_offset = cur.offset();
      const int k = take_artifact(cur);
      if (out.bits[2 + k]) {
        throw PromptError("duplicate artifact \"" + std::string(kArtifactPhrases[k]) +
                              "\" at offset " + std::to_string(art_offset),
                          kArtifactPhrases[k], art_offset);
      }
      out.bits[2 + k] = 1;
      if (cur.done()) {
        more = false;
      } else {
        cur.expect_word("and");
      }
    }
  }
  return out;
}

std::string format_prompt(const AttributeVector& attrs) {
  if (!attrs.valid()) {
    throw std::invalid_argument("format_prompt: invalid attribute vector");
  }
  std::string out = "a dermoscopic image with ";
  out += attrs.is_mel() ? "melanoma" : "melanocytic nevus";
  bool first = true;
  for (int k = 0; k < kNumArtifacts; ++k) {
    if (!attrs.artifact(k)) continue;
    out += first ? " showing " : " and ";
    out += kArtifactPhrases[k];
    first = false;
  }
  return out;
}

std::vector<AttributeVector> all_attribute_vectors() {
  std::vector<AttributeVector> out;
  out.reserve(kNumPrompts);
  for (int i = 0; i < kNumPrompts; ++i) out.push_back(AttributeVector::from_index(i));
  return out;
}

}  // namespace ddpolab
