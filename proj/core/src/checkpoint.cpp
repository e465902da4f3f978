#include "ptext/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "ptext/error.hpp"

namespace ptext {
namespace {

constexpr char kMagic[4] = {'P', 'T', 'X', 'T'};
constexpr std::uint32_t kMaxRows = 1u << 16;
constexpr std::uint32_t kMaxClasses = 1u << 20;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::CorruptCheckpoint, "checkpoint is truncated at byte " + std::to_string(pos_));
    }
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Mat read_rows(Reader& r, std::uint32_t rows, std::uint32_t cols) {
  r.need(static_cast<std::size_t>(rows) * cols * sizeof(double));
  Mat m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  }
  return m;
}

}  // namespace

std::string serialize_checkpoint(const PromptBank& bank, std::size_t bucket_count) {
  if (bank.coarse.rows() != bank.fine.rows() || bank.coarse.cols() != bank.fine.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "coarse and fine prompts differ in shape");
  }
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.prompt_length()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.num_classes()));
  put_le<std::uint64_t>(out, bank.seed);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bucket_count));
  for (const auto& name : bank.class_names) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  for (const Mat* m : {&bank.coarse, &bank.fine}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) put_f64(out, (*m)(i, j));
    }
  }
  return out;
}

LoadedCheckpoint deserialize_checkpoint(std::string_view bytes, std::optional<std::size_t> expected_dim) {
  Reader r(bytes);
  if (r.remaining() < sizeof(kMagic) || std::memcmp(r.take(sizeof(kMagic)).data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, "missing PTXT magic");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(kCheckpointVersion) + ")");
  }
  const auto n = r.le<std::uint32_t>();
  const auto d = r.le<std::uint32_t>();
  const auto c = r.le<std::uint32_t>();
  const auto seed = r.le<std::uint64_t>();
  const auto buckets = r.le<std::uint32_t>();
  if (n == 0 || n > kMaxRows || d < 2 || d > kMaxRows || c == 0 || c > kMaxClasses || buckets < d) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint header has implausible sizes");
  }
  if (expected_dim && *expected_dim != d) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint has d=" + std::to_string(d) + " but the encoder expects d=" +
                                                std::to_string(*expected_dim));
  }

  LoadedCheckpoint out;
  out.bucket_count = buckets;
  out.bank.seed = seed;
  for (std::uint32_t i = 0; i < c; ++i) {
    const auto len = r.le<std::uint32_t>();
    std::string name(r.take(len));
    try {
      out.bank.class_tokens.push_back(tokenize(name, buckets));
    } catch (const Error&) {
      throw Error(ErrorCode::CorruptCheckpoint, "checkpoint class name " + std::to_string(i) + " is empty");
    }
    out.bank.class_names.push_back(std::move(name));
  }
  out.bank.coarse = read_rows(r, n, d);
  out.bank.fine = read_rows(r, n, d);
  if (r.remaining() != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, std::to_string(r.remaining()) + " trailing bytes after the prompts");
  }
  return out;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open \"" + path.string() + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open \"" + tmp.string() + "\" for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "failed writing \"" + tmp.string() + "\"");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move output into place at \"" + path.string() + "\"");
  }
}

void save_checkpoint(const PromptBank& bank, const std::filesystem::path& path, std::size_t bucket_count) {
  write_file_atomic(path, serialize_checkpoint(bank, bucket_count));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  return deserialize_checkpoint(read_file_bytes(path), expected_dim);
}

}  // namespace ptext
