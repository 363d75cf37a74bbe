#include "rtr/dataset_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace rtr {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'T', 'R', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kFlagGroundTruth = 1;

template <typename UInt>
void put_uint(std::ostream& os, UInt v)
{
  std::array<char, sizeof(UInt)> bytes;
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }

template <typename UInt>
UInt get_uint(std::istream& is, const char* field)
{
  std::array<unsigned char, sizeof(UInt)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw std::runtime_error(std::string("dataset truncated while reading ") + field);
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const char* field) { return std::bit_cast<double>(get_uint<std::uint64_t>(is, field)); }

void put_block(std::ostream& os, const double* data, Index count)
{
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (Index i = 0; i < count; ++i)
      put_f64(os, data[i]);
  }
}

void get_block(std::istream& is, double* data, Index count, const char* field)
{
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double))))
      throw std::runtime_error(std::string("dataset truncated while reading ") + field);
  } else {
    for (Index i = 0; i < count; ++i)
      data[i] = get_f64(is, field);
  }
}

std::uint32_t family_code(NoiseFamily f) { return static_cast<std::uint32_t>(f); }

NoiseFamily family_from_code(std::uint32_t code)
{
  if (code > static_cast<std::uint32_t>(NoiseFamily::lognormal_centered))
    throw std::runtime_error("dataset has unknown noise family code " + std::to_string(code));
  return static_cast<NoiseFamily>(code);
}

} // namespace

void write_dataset(std::ostream& os, const DatasetFile& file)
{
  const SampleSet& s = file.samples;
  s.validate();
  const SyntheticSpec& spec = file.spec;
  os.write(kMagic.data(), kMagic.size());
  put_uint<std::uint32_t>(os, kDatasetFormatVersion);
  put_uint<std::uint32_t>(os, s.ground_truth ? kFlagGroundTruth : 0);
  for (Index p : s.dims)
    put_uint<std::uint64_t>(os, static_cast<std::uint64_t>(p));
  put_uint<std::uint64_t>(os, static_cast<std::uint64_t>(s.size()));
  put_uint<std::uint64_t>(os, spec.seed);
  put_uint<std::uint32_t>(os, family_code(spec.noise.family));
  put_uint<std::uint32_t>(os, 0);
  put_f64(os, spec.noise.param);
  put_f64(os, spec.noise.scale);
  for (Index r : spec.ranks)
    put_uint<std::uint64_t>(os, static_cast<std::uint64_t>(r));
  put_f64(os, spec.lambda_min);
  put_f64(os, spec.lambda_max);
  put_f64(os, spec.contamination.fraction);
  put_f64(os, spec.contamination.factor);
  if (s.ground_truth)
    put_block(os, s.ground_truth->data().data(), s.ground_truth->size());
  put_block(os, s.design.data(), s.design.size());
  put_block(os, s.response.data(), s.response.size());
  if (!os)
    throw std::runtime_error("failed to write dataset");
}

DatasetFile read_dataset(std::istream& is)
{
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("not a dataset file (bad magic)");
  const auto version = get_uint<std::uint32_t>(is, "version");
  if (version != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset format version " + std::to_string(version));
  const auto flags = get_uint<std::uint32_t>(is, "flags");
  if (flags & ~kFlagGroundTruth)
    throw std::runtime_error("dataset has unknown flag bits");

  DatasetFile file;
  SyntheticSpec& spec = file.spec;
  for (auto& p : spec.dims)
    p = static_cast<Index>(get_uint<std::uint64_t>(is, "dims"));
  spec.n = static_cast<Index>(get_uint<std::uint64_t>(is, "n"));
  spec.seed = get_uint<std::uint64_t>(is, "seed");
  spec.noise.family = family_from_code(get_uint<std::uint32_t>(is, "noise family"));
  get_uint<std::uint32_t>(is, "reserved");
  spec.noise.param = get_f64(is, "noise param");
  spec.noise.scale = get_f64(is, "noise scale");
  for (auto& r : spec.ranks)
    r = static_cast<Index>(get_uint<std::uint64_t>(is, "ranks"));
  spec.lambda_min = get_f64(is, "lambda_min");
  spec.lambda_max = get_f64(is, "lambda_max");
  spec.contamination.fraction = get_f64(is, "contamination fraction");
  spec.contamination.factor = get_f64(is, "contamination factor");

  for (Index p : spec.dims)
    if (p < 1 || p > (Index{1} << 20))
      throw std::runtime_error("dataset has invalid dimension " + std::to_string(p));
  if (spec.n < 1 || spec.n > (Index{1} << 32))
    throw std::runtime_error("dataset has invalid sample count " + std::to_string(spec.n));

  SampleSet& s = file.samples;
  s.dims = spec.dims;
  const Index P = dims_product(spec.dims);
  if (flags & kFlagGroundTruth) {
    Tensor3d truth(spec.dims);
    get_block(is, truth.data().data(), P, "ground truth");
    s.ground_truth = std::move(truth);
  }
  s.design.resize(P, spec.n);
  get_block(is, s.design.data(), s.design.size(), "design");
  s.response.resize(spec.n);
  get_block(is, s.response.data(), spec.n, "responses");
  if (is.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("dataset has trailing bytes");
  s.validate();
  return file;
}

void write_dataset_file(const std::string& path, const DatasetFile& file)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(os, file);
}

DatasetFile read_dataset_file(const std::string& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open " + path);
  return read_dataset(is);
}

} // namespace rtr
