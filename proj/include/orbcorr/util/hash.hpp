#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace orbcorr::util {

#ifdef ORBCORR_VERSION
inline constexpr std::string_view kVersion = ORBCORR_VERSION;
#else
inline constexpr std::string_view kVersion = "dev";
#endif

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Hex FNV-1a of the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const nlohmann::json& j);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace orbcorr::util
