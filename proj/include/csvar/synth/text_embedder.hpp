#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace csvar {

// Text encoder plug point. The default is a hashing encoder; a pretrained
// sentence encoder can be swapped in by implementing this interface.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Lower-cased tokens split on ASCII non-alphanumerics; bytes >= 0x80 are kept
// inside tokens so UTF-8 text hashes whole words.
std::vector<std::string> tokenize(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

// Token counts hashed into `dim` buckets (FNV-1a 64 mod dim), then
// L2-normalized. Empty or token-free text maps to the zero vector.
class HashingEmbedder final : public TextEmbedder {
 public:
  explicit HashingEmbedder(std::size_t dim);
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

std::vector<double> embed_text(std::string_view text, std::size_t d_text);

}  // namespace csvar
