#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ptext/corpus.hpp"
#include "ptext/encoder.hpp"

namespace ptext {

/// One externally extracted sample: a clip-level vector, optional frame-level
/// vectors and the positive class indices.
struct FeatureRecord {
  Vec clip;
  Mat frames;  // F x d; zero rows when absent
  Label label;

  bool has_frames() const noexcept { return frames.rows() > 0; }
};

struct FeatureFile {
  std::vector<FeatureRecord> records;
  std::size_t dim = 0;

  bool all_have_frames() const noexcept;
};

/// JSON Lines, one {"clip": [...], "frames": [[...], ...], "labels": [...]}
/// record per line. Every vector must have length `dim`; vectors are
/// L2-normalized on load.
FeatureFile read_feature_file(std::istream& in, std::size_t dim, std::size_t num_classes);

}  // namespace ptext
