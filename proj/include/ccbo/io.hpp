#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccbo/basis.hpp"
#include "ccbo/hjb.hpp"

namespace ccbo {

inline constexpr const char* kValueFunctionFormat = "ccbo-value-function";
inline constexpr int kValueFunctionVersion = 1;
inline constexpr const char* kLegendreNormalization =
    "standard Legendre P_r with P_r(1)=1, mapped affinely from [-1,1] to [lower,upper]";
inline constexpr const char* kMonomialNormalization = "x^r in the unscaled coordinate";

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BasisMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json basis_to_json(const MultiIndexBasis& basis) {
  nlohmann::json j;
  j["family"] = std::string(to_string(basis.family()));
  j["normalization"] =
      basis.family() == BasisFamily::Legendre ? kLegendreNormalization : kMonomialNormalization;
  j["truncation"] = {{"kind", std::string(to_string(basis.truncation().kind))},
                     {"degree", basis.truncation().degree}};
  j["domain"] = {{"lower", basis.domain().lower()}, {"upper", basis.domain().upper()}};
  j["indices"] = basis.indices();
  return j;
}

/// Rebuilds a basis and checks the stored index list against the truncation rule.
inline MultiIndexBasis basis_from_json(const nlohmann::json& j) {
  const auto family = basis_family_from_string(j.at("family").get<std::string>());
  const Truncation trunc{truncation_kind_from_string(j.at("truncation").at("kind").get<std::string>()),
                         j.at("truncation").at("degree").get<int>()};
  BoxDomain domain(j.at("domain").at("lower").get<std::vector<double>>(),
                   j.at("domain").at("upper").get<std::vector<double>>());
  auto indices = j.at("indices").get<std::vector<MultiIndex>>();
  if (indices != enumerate_indices(trunc, domain.dim()))
    throw BasisMismatchError(
        "index list does not match the declared truncation (expected the graded-lex enumeration)");
  return {family, std::move(domain), trunc, std::move(indices)};
}

inline nlohmann::json to_json(const ValueFunctionApprox& vfa) {
  nlohmann::json j;
  j["format"] = kValueFunctionFormat;
  j["version"] = kValueFunctionVersion;
  j["basis"] = basis_to_json(vfa.basis);
  j["epsilon"] = vfa.epsilon;
  j["mu_schedule"] = vfa.mu_schedule;
  j["config_hash"] = vfa.config_hash;
  j["coefficients"] = std::vector<double>(vfa.coeffs.begin(), vfa.coeffs.end());
  j["f_approx_coefficients"] = std::vector<double>(vfa.f_approx.begin(), vfa.f_approx.end());
  return j;
}

inline ValueFunctionApprox value_function_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kValueFunctionFormat)
      throw FormatError("not a value-function file");
    const int version = j.at("version").get<int>();
    if (version != kValueFunctionVersion)
      throw FormatError("unsupported value-function file version " + std::to_string(version));
    MultiIndexBasis basis = basis_from_json(j.at("basis"));
    const auto c = j.at("coefficients").get<std::vector<double>>();
    const auto a = j.at("f_approx_coefficients").get<std::vector<double>>();
    if (c.size() != basis.size() || (!a.empty() && a.size() != basis.size()))
      throw BasisMismatchError("coefficient count does not match basis size");
    ValueFunctionApprox vfa{std::move(basis),
                            Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size())),
                            j.at("epsilon").get<double>(),
                            Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size())),
                            j.at("mu_schedule").get<std::vector<double>>(),
                            j.at("config_hash").get<std::string>()};
    if (!(vfa.epsilon > 0.0)) throw FormatError("epsilon must be positive");
    return vfa;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed value-function file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed value-function file: ") + e.what());
  }
}

inline std::string dump_value_function(const ValueFunctionApprox& vfa) {
  return to_json(vfa).dump(2) + "\n";
}

inline void save_value_function(const ValueFunctionApprox& vfa, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << dump_value_function(vfa);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline ValueFunctionApprox load_value_function(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed value-function file " + path.string() + ": " + e.what());
  }
  return value_function_from_json(j);
}

/// Rejects a value function built for a different dimension.
inline void require_dimension(const ValueFunctionApprox& vfa, std::size_t dim) {
  if (vfa.basis.dim() != dim)
    throw BasisMismatchError("value function has dimension " + std::to_string(vfa.basis.dim()) +
                             " but the problem has dimension " + std::to_string(dim));
}

}  // namespace ccbo
