#pragma once

// Reader and writer for the length-prefixed tensor archive:
//
//   [u64 little-endian N][N bytes of UTF-8 JSON header][data section]
//
// The header maps each tensor name to {"dtype", "shape", "data_offsets"},
// offsets relative to the start of the data section, plus an optional
// "__metadata__" string map.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "monosoup/error.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup {

namespace detail {

inline constexpr const char* kMetadataKey = "__metadata__";

inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> buf(size);
  in.seekg(0);
  if (size && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size))) {
    fail(ErrorCode::IoFailure, "short read on '" + path.string() + "'");
  }
  return buf;
}

}  // namespace detail

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// failed run never leaves a truncated output behind.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(static_cast<unsigned long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoFailure, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorCode::IoFailure, "write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::IoFailure, "cannot move output into place at '" + path.string() + "'");
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

/// Decodes an in-memory archive.
inline Checkpoint parse_archive(std::span<const std::byte> file) {
  if (file.size() < 8) fail(ErrorCode::MalformedHeader, "file shorter than the 8-byte length prefix");
  const auto n = detail::load_le<std::uint64_t>(file.data());
  if (n > file.size() - 8) {
    fail(ErrorCode::MalformedHeader, "header length " + std::to_string(n) + " exceeds file size " +
                                         std::to_string(file.size()));
  }
  const auto* hdr = reinterpret_cast<const char*>(file.data() + 8);
  nlohmann::json header;
  std::set<std::string> seen;
  std::string duplicate;
  // Top-level keys are tensor names; a repeated one would otherwise be
  // silently overwritten by the parser.
  auto on_event = [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    if (depth == 1 && event == nlohmann::json::parse_event_t::key && parsed.is_string()) {
      if (!seen.insert(parsed.get<std::string>()).second && duplicate.empty()) {
        duplicate = parsed.get<std::string>();
      }
    }
    return true;
  };
  try {
    header = nlohmann::json::parse(hdr, hdr + n, on_event);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedHeader, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) fail(ErrorCode::MalformedHeader, "header is not a JSON object");
  if (!duplicate.empty()) fail(ErrorCode::MalformedHeader, "duplicate tensor name '" + duplicate + "'");

  const auto data = file.subspan(8 + n);
  Checkpoint ckpt;
  struct Range {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Range> ranges;

  for (const auto& [name, entry] : header.items()) {
    if (name == detail::kMetadataKey) {
      if (!entry.is_object()) fail(ErrorCode::MalformedHeader, "__metadata__ must be an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) fail(ErrorCode::MalformedHeader, "__metadata__ values must be strings");
        ckpt.metadata.emplace(k, v.get<std::string>());
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      fail(ErrorCode::MalformedHeader, "tensor '" + name + "' lacks dtype/shape/data_offsets");
    }
    const auto& jd = entry["dtype"];
    if (!jd.is_string()) fail(ErrorCode::MalformedHeader, "tensor '" + name + "' dtype is not a string");
    const auto dtype = parse_dtype(jd.get<std::string>());
    if (!dtype) {
      fail(ErrorCode::UnsupportedDtype, "tensor '" + name + "' has dtype " + jd.get<std::string>());
    }
    const auto& js = entry["shape"];
    const auto& jo = entry["data_offsets"];
    if (!js.is_array() || !jo.is_array() || jo.size() != 2) {
      fail(ErrorCode::MalformedHeader, "tensor '" + name + "' has malformed shape or data_offsets");
    }
    Shape shape;
    for (const auto& e : js) {
      if (!e.is_number_unsigned()) fail(ErrorCode::MalformedHeader, "tensor '" + name + "' shape entry is not a non-negative integer");
      shape.push_back(e.get<std::int64_t>());
    }
    if (!jo[0].is_number_unsigned() || !jo[1].is_number_unsigned()) {
      fail(ErrorCode::MalformedHeader, "tensor '" + name + "' offsets are not non-negative integers");
    }
    const auto begin = jo[0].get<std::uint64_t>();
    const auto end = jo[1].get<std::uint64_t>();
    if (begin > end || end > data.size()) {
      fail(ErrorCode::OffsetOverlap, "tensor '" + name + "' range [" + std::to_string(begin) + "," +
                                         std::to_string(end) + ") exceeds data section of " +
                                         std::to_string(data.size()) + " bytes");
    }
    const auto expected = static_cast<std::uint64_t>(element_count(shape)) * element_size(*dtype);
    if (end - begin != expected) {
      fail(ErrorCode::MalformedHeader, "tensor '" + name + "' spans " + std::to_string(end - begin) +
                                           " bytes, shape needs " + std::to_string(expected));
    }
    ranges.push_back({begin, end, name});
    std::vector<std::byte> buf(data.begin() + static_cast<std::ptrdiff_t>(begin),
                               data.begin() + static_cast<std::ptrdiff_t>(end));
    ckpt.tensors.emplace(name, Tensor(*dtype, std::move(shape), std::move(buf)));
  }

  std::sort(ranges.begin(), ranges.end(),
            [](const Range& a, const Range& b) { return std::tie(a.begin, a.end) < std::tie(b.begin, b.end); });
  const Range* furthest = nullptr;
  for (const auto& cur : ranges) {
    if (cur.begin == cur.end) continue;
    if (furthest && cur.begin < furthest->end) {
      fail(ErrorCode::OffsetOverlap, "tensors '" + furthest->name + "' and '" + cur.name + "' overlap");
    }
    if (!furthest || cur.end > furthest->end) furthest = &cur;
  }
  return ckpt;
}

inline Checkpoint read_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoFailure, "no such file '" + path.string() + "'");
  return parse_archive(detail::read_file(path));
}

/// Encodes a checkpoint. Tensors are laid out in lexicographic name order and
/// the header is space-padded to an 8-byte boundary.
inline std::vector<std::byte> serialize_archive(const Checkpoint& ckpt) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto size = static_cast<std::uint64_t>(t.bytes().size());
    header[name] = {{"dtype", dtype_name(t.dtype())},
                    {"shape", t.shape()},
                    {"data_offsets", {offset, offset + size}}};
    offset += size;
  }
  if (!ckpt.metadata.empty()) header[detail::kMetadataKey] = ckpt.metadata;

  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::byte> out(8 + text.size() + offset);
  detail::store_le<std::uint64_t>(out.data(), text.size());
  std::memcpy(out.data() + 8, text.data(), text.size());
  auto* cursor = out.data() + 8 + text.size();
  for (const auto& [name, t] : ckpt.tensors) {
    std::memcpy(cursor, t.bytes().data(), t.bytes().size());
    cursor += t.bytes().size();
  }
  return out;
}

inline void write_archive(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_archive(ckpt));
}

}  // namespace monosoup
