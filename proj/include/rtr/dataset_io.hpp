#pragma once

#include "rtr/simulation.hpp"

#include <iosfwd>
#include <string>

namespace rtr {

/// Dataset container layout (all integers unsigned little-endian, all reals
/// IEEE-754 binary64 little-endian):
///
///   offset  size  field
///        0     8  magic "RTRDATA\0"
///        8     4  format version (1)
///       12     4  flags (bit 0: ground truth present)
///       16    24  p1, p2, p3 (u64)
///       40     8  n (u64)
///       48     8  seed (u64)
///       56     4  noise family (0 none, 1 gaussian, 2 student_t, 3 pareto_centered, 4 lognormal_centered)
///       60     4  reserved, zero
///       64    16  noise param, noise scale (f64)
///       80    24  r1, r2, r3 (u64)
///      104    16  lambda_min, lambda_max (f64)
///      120    16  contamination fraction, contamination factor (f64)
///      136        ground truth, P = p1 p2 p3 values in Tensor3 order (only if flag bit 0)
///                 design, P x n values, covariate i contiguous
///                 responses, n values
///
/// The header fields other than dims and n describe how the data were
/// generated and are informational for files written from external data.
struct DatasetFile
{
  SyntheticSpec spec;
  SampleSet samples;
};

constexpr std::uint32_t kDatasetFormatVersion = 1;
constexpr std::size_t kDatasetHeaderBytes = 136;

void write_dataset(std::ostream& os, const DatasetFile& file);
DatasetFile read_dataset(std::istream& is);

void write_dataset_file(const std::string& path, const DatasetFile& file);
DatasetFile read_dataset_file(const std::string& path);

} // namespace rtr
