#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fnc/ctm.hpp"
#include "fnc/network.hpp"

namespace fnc::io {

using json = nlohmann::json;

/// Thrown for malformed input files: unknown keys, wrong types, unknown cell
/// names. The message names the offending path inside the document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a network from its JSON description (see docs/formats.md).
/// Unknown keys are rejected.
NetworkModel parse_network(const json& doc);
NetworkModel load_network(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

/// Cell index by name; throws FormatError for unknown names.
std::size_t cell_index(const NetworkModel& net, std::string_view name);

/// Parses a turning ratio given as a number or as a "p/q" string.
double parse_ratio(const json& v, const std::string& where);

/// Converts "10min", "30s", "2h" or a bare step count to steps of `dt_hours`.
/// Throws std::invalid_argument when the duration is not a whole number of steps.
std::size_t duration_to_steps(std::string_view text, double dt_hours);

/// Long-format trajectory: t, cell, rho, phi (phi empty at the final step).
void write_trajectory_csv(std::ostream& os, const NetworkModel& net, const Trajectory& tr);
/// TTS, horizon and event counts.
json trajectory_summary(const Trajectory& tr);

/// Plot-ready contour data: t, cell_position_km, density. Cells are placed at
/// the cumulative length of the cells listed before them.
void write_contour_csv(std::ostream& os, const Trajectory& tr);
/// Reads a contour file back into an n x (T+1) density matrix.
Mat read_contour_csv(std::istream& is);

/// 64-bit FNV-1a, used for input hashes in run manifests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

/// Writes `doc` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const json& doc);

}  // namespace fnc::io
