// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/trace_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kascade/error.hpp"

namespace kascade {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.insert(out.end(), bits.begin(), bits.end());
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> bits{};
  std::memcpy(bits.data(), bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(values.data());
    out.insert(out.end(), raw, raw + values.size() * sizeof(float));
  } else {
    for (float v : values) put(out, v);
  }
}

void get_floats(std::span<const std::uint8_t> bytes, std::size_t& offset,
                std::vector<float>& values) {
  for (float& v : values) {
    v = get<float>(bytes, offset);
    if (!std::isfinite(v)) throw FormatError("non-finite payload value", offset);
    offset += sizeof(float);
  }
}

void require(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count) {
  if (bytes.size() < offset + count) {
    throw FormatError("truncated header: need " + std::to_string(offset + count) +
                          " bytes, have " + std::to_string(bytes.size()),
                      bytes.size());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_trace(const AttentionTrace& trace) {
  trace.validate_shape();
  const auto& d = trace.dims;
  const bool hidden = d.model_dim > 0;
  std::vector<std::uint8_t> out;
  out.reserve(64 + trace.prompt_id.size() +
              sizeof(float) * (trace.q.size() + 2 * trace.k.size() + 2 * trace.x.size()));
  out.insert(out.end(), std::begin(kTraceMagic), std::end(kTraceMagic));
  put(out, kTraceVersion);
  for (auto dim : {d.num_layers, d.num_query_heads, d.num_kv_heads, d.head_dim, d.seq_len}) {
    put(out, static_cast<std::uint32_t>(dim));
  }
  put(out, kDtypeFloat32);
  put(out, static_cast<std::uint8_t>(hidden ? kFlagHiddenStates : 0));
  put(out, static_cast<std::uint32_t>(trace.prompt_id.size()));
  out.insert(out.end(), trace.prompt_id.begin(), trace.prompt_id.end());
  if (hidden) put(out, static_cast<std::uint32_t>(d.model_dim));
  put_floats(out, trace.q);
  put_floats(out, trace.k);
  put_floats(out, trace.v);
  if (hidden) {
    put_floats(out, trace.x);
    put_floats(out, trace.y);
  }
  return out;
}

TraceFileHeader decode_trace_header(std::span<const std::uint8_t> bytes) {
  require(bytes, 0, 4);
  if (std::memcmp(bytes.data(), kTraceMagic, 4) != 0) {
    throw FormatError("bad magic: expected \"KSCD\"", std::uint64_t{0});
  }
  TraceFileHeader h;
  require(bytes, 4, 2);
  h.version = get<std::uint16_t>(bytes, 4);
  if (h.version != kTraceVersion) {
    throw FormatError("unsupported trace version " + std::to_string(h.version), std::uint64_t{4});
  }
  require(bytes, 6, 26);
  std::size_t* fields[] = {&h.dims.num_layers, &h.dims.num_query_heads, &h.dims.num_kv_heads,
                           &h.dims.head_dim, &h.dims.seq_len};
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t offset = 6 + 4 * i;
    *fields[i] = get<std::uint32_t>(bytes, offset);
    if (*fields[i] == 0) throw FormatError("zero dimension in header", std::uint64_t{offset});
  }
  if (h.dims.num_query_heads % h.dims.num_kv_heads != 0) {
    throw FormatError("query heads not a multiple of kv heads", std::uint64_t{14});
  }
  h.dtype = bytes[26];
  if (h.dtype != kDtypeFloat32) {
    throw FormatError("unsupported dtype code " + std::to_string(h.dtype), std::uint64_t{26});
  }
  h.flags = bytes[27];
  if ((h.flags & ~kFlagHiddenStates) != 0) {
    throw FormatError("unknown flag bits", std::uint64_t{27});
  }
  const std::size_t prompt_len = get<std::uint32_t>(bytes, 28);
  require(bytes, 32, prompt_len);
  h.prompt_id.assign(reinterpret_cast<const char*>(bytes.data() + 32), prompt_len);
  std::size_t offset = 32 + prompt_len;
  if (h.flags & kFlagHiddenStates) {
    require(bytes, offset, 4);
    h.dims.model_dim = get<std::uint32_t>(bytes, offset);
    if (h.dims.model_dim == 0) throw FormatError("zero model_dim", std::uint64_t{offset});
    offset += 4;
  }
  // Reject dims whose payload could not be addressed before multiplying.
  long double floats = 1.0L;
  for (auto* f : fields) floats *= static_cast<long double>(*f);
  if (floats * 3.0L > 0x1p56L) throw FormatError("declared payload too large", std::uint64_t{6});
  h.header_bytes = offset;
  h.payload_bytes = sizeof(float) * (q_size(h.dims) + 2 * kv_size(h.dims) +
                                     (h.dims.model_dim > 0 ? 2 * hidden_size(h.dims) : 0));
  return h;
}

AttentionTrace decode_trace(std::span<const std::uint8_t> bytes) {
  const auto header = decode_trace_header(bytes);
  const std::size_t expected = header.header_bytes + header.payload_bytes;
  if (bytes.size() < expected) {
    throw FormatError("truncated payload: expected " + std::to_string(expected) +
                          " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("trailing bytes after payload", std::uint64_t{expected});
  }
  auto trace = AttentionTrace::zeros(header.dims, header.prompt_id);
  std::size_t offset = header.header_bytes;
  get_floats(bytes, offset, trace.q);
  get_floats(bytes, offset, trace.k);
  get_floats(bytes, offset, trace.v);
  if (header.dims.model_dim > 0) {
    get_floats(bytes, offset, trace.x);
    get_floats(bytes, offset, trace.y);
  }
  return trace;
}

void write_trace(const std::filesystem::path& path, const AttentionTrace& trace) {
  const auto bytes = encode_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

AttentionTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_trace(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.byte_offset());
  }
}

std::vector<AttentionTrace> read_traces(const std::filesystem::path& path) {
  std::vector<AttentionTrace> traces;
  if (!std::filesystem::is_directory(path)) {
    traces.push_back(read_trace(path));
    return traces;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".kscd") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .kscd files in " + path.string());
  for (const auto& f : files) traces.push_back(read_trace(f));
  return traces;
}

}  // namespace kascade
