// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kascade/trace.hpp"

namespace kascade {

// KSCD trace file, all integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "KSCD"
//   4       2     u16 version (= 1)
//   6       20    u32 L, Hq, Hkv, d, N
//   26      1     u8 dtype (0 = float32)
//   27      1     u8 flags (bit 0: X/Y present; other bits must be 0)
//   28      4     u32 prompt_id byte length P
//   32      P     prompt_id, UTF-8
//   32+P    4     u32 model_dim (only when flags bit 0 is set)
//   ...           float32 payload: Q [L][Hq][N][d], K [L][Hkv][N][d],
//                 V [L][Hkv][N][d], then X [L][N][model_dim] and
//                 Y [L][N][model_dim] when flags bit 0 is set.
//
// The file must end exactly where the payload ends.
inline constexpr char kTraceMagic[4] = {'K', 'S', 'C', 'D'};
inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::uint8_t kFlagHiddenStates = 0x01;

struct TraceFileHeader {
  std::uint16_t version = kTraceVersion;
  TraceDims dims;
  std::uint8_t dtype = kDtypeFloat32;
  std::uint8_t flags = 0;
  std::string prompt_id;
  std::size_t header_bytes = 0;
  std::size_t payload_bytes = 0;
};

std::vector<std::uint8_t> encode_trace(const AttentionTrace& trace);

// Throws FormatError with the byte offset of the first problem: bad magic,
// unsupported version or dtype, unknown flags, inconsistent dims, size
// mismatch (truncated or trailing bytes) or non-finite payload values.
AttentionTrace decode_trace(std::span<const std::uint8_t> bytes);
TraceFileHeader decode_trace_header(std::span<const std::uint8_t> bytes);

void write_trace(const std::filesystem::path& path, const AttentionTrace& trace);
AttentionTrace read_trace(const std::filesystem::path& path);

// A file, or every *.kscd file of a directory in name order.
std::vector<AttentionTrace> read_traces(const std::filesystem::path& path);

}  // namespace kascade
