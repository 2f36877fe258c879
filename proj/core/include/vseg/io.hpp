#pragma once

#include <filesystem>

#include "vseg/sdn.hpp"
#include "vseg/ssn.hpp"
#include "vseg/volume.hpp"

namespace vseg {

/// Volume container, bit-exact:
///   "VVOL" | u16 version=1 | u8 dtype | u32 D,H,W | f64 sz,sy,sx | payload
/// dtype 0 = 32-bit real image, 1 = binary byte mask, 2 = tri-label byte with
/// unlabeled stored as 255. Multi-byte values little-endian, payload in
/// (z, y, x) row-major order. Read errors are FormatError naming the field.
enum class VolumeKind : uint8_t { kImage = 0, kBinary = 1, kTriLabel = 2 };

void write_volume(const std::filesystem::path& path, const VolumeImage& v);
void write_volume(const std::filesystem::path& path, const BinaryMask& v);
void write_volume(const std::filesystem::path& path, const TriLabelMask& v);

VolumeKind peek_volume_kind(const std::filesystem::path& path);
VolumeImage read_volume_image(const std::filesystem::path& path);
BinaryMask read_binary_mask(const std::filesystem::path& path);
TriLabelMask read_tri_label_mask(const std::filesystem::path& path);

/// Checkpoint container:
///   "VCKP" | u16 version=1 | u8 kind (0 ssn, 1 sdn) | u8 frozen | net config |
///   training history | parameter + momentum arrays | u64 fnv1a-64 checksum.
/// Loading verifies the checksum (ChecksumError on mismatch) and restores
/// bit-identical predictions.
void save_checkpoint(const std::filesystem::path& path, const SSNModel& model);
void save_checkpoint(const std::filesystem::path& path, const SDNModel& model);
SSNModel load_ssn_checkpoint(const std::filesystem::path& path);
SDNModel load_sdn_checkpoint(const std::filesystem::path& path);

}  // namespace vseg
