#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "../core_types.hpp"

namespace rdi::synth {

// ---- PNG primitives -------------------------------------------------------
void write_png_rgb8(const std::filesystem::path& path, int w, int h,
                    const std::vector<uint8_t>& interleaved);
void write_png_gray8(const std::filesystem::path& path, int w, int h,
                     const std::vector<uint8_t>& gray);
void write_png_gray16(const std::filesystem::path& path, int w, int h,
                      const std::vector<uint16_t>& gray);
std::vector<uint8_t> read_png_rgb8(const std::filesystem::path& path, int& w, int& h);
std::vector<uint8_t> read_png_gray8(const std::filesystem::path& path, int& w, int& h);
std::vector<uint16_t> read_png_gray16(const std::filesystem::path& path, int& w, int& h);

// ---- Middlebury .flo ------------------------------------------------------
// 4-byte magic "PIEH" (float 202021.25), int32 width, int32 height,
// row-major interleaved float32 (dx, dy), little-endian.
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

// ---- dataset layout -------------------------------------------------------
struct DatasetMeta {
  double depth_max = 10.0;
  int num_classes = 8;
  std::vector<int> background_ids = {0, 1, 2};
  int height = 64, width = 64;
};

struct SequenceEntry {
  std::string dir;  // relative to dataset root
  int frames = 0;
};

struct DatasetManifest {
  DatasetMeta meta;
  std::vector<SequenceEntry> sequences;
  std::filesystem::path root;
};

// Writes one sequence into root/<name>/ using the canonical file layout.
void write_sequence(const std::filesystem::path& root, const std::string& name,
                    const SequenceSample& sample);
void write_manifest(const std::filesystem::path& root, const DatasetMeta& meta,
                    const std::vector<SequenceEntry>& sequences);
void write_dataset(const std::filesystem::path& root, const DatasetMeta& meta,
                   const std::vector<SequenceSample>& samples);

// Parses manifest.json and verifies every referenced file exists.
DatasetManifest read_dataset(const std::filesystem::path& root);
// stride > 1 subsamples frames; flow/occlusion are only available at
// stride 1 (entries are absent otherwise).
SequenceSample read_sequence(const DatasetManifest& manifest, int index,
                             int stride = 1);

}  // namespace rdi::synth
