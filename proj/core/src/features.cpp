#include "ptext/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <string>

#include <json.hpp>

#include "ptext/error.hpp"

namespace ptext {
namespace {

using json = nlohmann::json;

Vec read_unit_vector(const json& arr, std::size_t dim, std::size_t line_no) {
  if (!arr.is_array() || arr.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature line " + std::to_string(line_no) + " has a vector of the wrong length (expected " +
                    std::to_string(dim) + ")");
  }
  Vec v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::ZeroVector, "feature line " + std::to_string(line_no) + " has a zero or non-finite vector");
  }
  return v / norm;
}

}  // namespace

bool FeatureFile::all_have_frames() const noexcept {
  return std::all_of(records.begin(), records.end(), [](const FeatureRecord& r) { return r.has_frames(); });
}

FeatureFile read_feature_file(std::istream& in, std::size_t dim, std::size_t num_classes) {
  FeatureFile file;
  file.dim = dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      FeatureRecord out;
      out.clip = read_unit_vector(rec.at("clip"), dim, line_no);
      if (rec.contains("frames")) {
        const auto& frames = rec.at("frames");
        if (!frames.is_array()) throw Error(ErrorCode::InvalidInput, "\"frames\" must be an array");
        out.frames.resize(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(dim));
        for (std::size_t f = 0; f < frames.size(); ++f) {
          out.frames.row(static_cast<Eigen::Index>(f)) = read_unit_vector(frames[f], dim, line_no).transpose();
        }
      }
      out.label.assign(num_classes, 0);
      for (const auto& idx : rec.at("labels")) {
        const auto c = idx.get<long long>();
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
          throw Error(ErrorCode::InvalidLabel, "feature line " + std::to_string(line_no) + " has label " +
                                                   std::to_string(c) + " outside the class list");
        }
        out.label[static_cast<std::size_t>(c)] = 1;
      }
      if (std::none_of(out.label.begin(), out.label.end(), [](auto v) { return v != 0; })) {
        throw Error(ErrorCode::InvalidLabel, "feature line " + std::to_string(line_no) + " has no labels");
      }
      file.records.push_back(std::move(out));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidInput, "feature line " + std::to_string(line_no) + " is malformed: " + e.what());
    }
  }
  return file;
}

}  // namespace ptext
