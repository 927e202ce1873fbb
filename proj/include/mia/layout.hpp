#pragma once

#include <cstddef>

namespace mia {

/// Partition of the key axis: text tokens first, then one block of
/// `block_len` tokens per face in stacking order. Shared by the embedding
/// stack (rows) and the attention mask (columns).
struct StackLayout {
  std::size_t text_len = 0;
  std::size_t block_len = 0;
  std::size_t faces = 0;

  std::size_t keys() const { return text_len + faces * block_len; }
  std::size_t block_begin(std::size_t face) const { return text_len + face * block_len; }
  std::size_t block_end(std::size_t face) const { return block_begin(face) + block_len; }

  /// Block length is irrelevant when there are no faces.
  bool operator==(const StackLayout& o) const {
    return text_len == o.text_len && faces == o.faces && (faces == 0 || block_len == o.block_len);
  }
};

}  // namespace mia
