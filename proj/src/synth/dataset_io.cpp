#include "dataset_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rdi::synth {

namespace fs = std::filesystem;

namespace {

constexpr float kFloMagic = 202021.25f;

[[noreturn]] void fail(const fs::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png(const fs::path& path, int w, int h, int bit_depth, int color_type,
               const std::vector<png_bytep>& rows) {
  PngWriter ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) fail(path, "cannot open for writing");
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) fail(path, "libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) fail(path, "libpng write error");
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  if (bit_depth == 16) png_set_swap(ctx.png);  // stored big-endian in PNG
  png_write_image(ctx.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(ctx.png, nullptr);
}

void read_png(const fs::path& path, int expected_color_type, int expected_depth,
              int& w, int& h, std::vector<uint8_t>& bytes) {
  PngReader ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) fail(path, "cannot open for reading");
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) fail(path, "libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) fail(path, "malformed PNG");
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);
  w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  const int depth = png_get_bit_depth(ctx.png, ctx.info);
  const int ctype = png_get_color_type(ctx.png, ctx.info);
  if (depth != expected_depth || ctype != expected_color_type)
    fail(path, "unexpected PNG format (depth " + std::to_string(depth) +
                   ", color type " + std::to_string(ctype) + ")");
  if (depth == 16) png_set_swap(ctx.png);
  const size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);
  bytes.resize(rowbytes * static_cast<size_t>(h));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = bytes.data() + rowbytes * y;
  png_read_image(ctx.png, rows.data());
}

}  // namespace

void write_png_rgb8(const fs::path& path, int w, int h,
                    const std::vector<uint8_t>& interleaved) {
  if (interleaved.size() != static_cast<size_t>(w) * h * 3)
    fail(path, "rgb8 buffer size mismatch");
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(interleaved.data() + static_cast<size_t>(y) * w * 3);
  write_png(path, w, h, 8, PNG_COLOR_TYPE_RGB, rows);
}

void write_png_gray8(const fs::path& path, int w, int h,
                     const std::vector<uint8_t>& gray) {
  if (gray.size() != static_cast<size_t>(w) * h) fail(path, "gray8 buffer size mismatch");
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(gray.data() + static_cast<size_t>(y) * w);
  write_png(path, w, h, 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_gray16(const fs::path& path, int w, int h,
                      const std::vector<uint16_t>& gray) {
  if (gray.size() != static_cast<size_t>(w) * h) fail(path, "gray16 buffer size mismatch");
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
        reinterpret_cast<const png_byte*>(gray.data() + static_cast<size_t>(y) * w));
  write_png(path, w, h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

std::vector<uint8_t> read_png_rgb8(const fs::path& path, int& w, int& h) {
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_RGB, 8, w, h, bytes);
  return bytes;
}

std::vector<uint8_t> read_png_gray8(const fs::path& path, int& w, int& h) {
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_GRAY, 8, w, h, bytes);
  return bytes;
}

std::vector<uint16_t> read_png_gray16(const fs::path& path, int& w, int& h) {
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_GRAY, 16, w, h, bytes);
  std::vector<uint16_t> out(static_cast<size_t>(w) * h);
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(uint16_t));
  return out;
}

void write_flo(const fs::path& path, const FlowField& flow) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  const float magic = kFloMagic;
  const int32_t w = flow.w, h = flow.h;
  f.write(reinterpret_cast<const char*>(&magic), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[static_cast<size_t>(x) * 2] = static_cast<float>(flow.dx(y, x));
      row[static_cast<size_t>(x) * 2 + 1] = static_cast<float>(flow.dy(y, x));
    }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) fail(path, "write failure");
}

FlowField read_flo(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for reading");
  float magic = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  if (!f || magic != kFloMagic)
    fail(path, "parse error at byte offset 0: bad magic (expected PIEH)");
  int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || w <= 0 || w > 1 << 20) fail(path, "parse error at byte offset 4: bad width");
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || h <= 0 || h > 1 << 20) fail(path, "parse error at byte offset 8: bad height");
  FlowField flow;
  flow.w = w;
  flow.h = h;
  flow.data.assign(static_cast<size_t>(2) * w * h, 0.0);
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f)
      fail(path, "parse error at byte offset " +
                     std::to_string(12 + static_cast<size_t>(y) * w * 2 * sizeof(float)) +
                     ": truncated flow data");
    for (int x = 0; x < w; ++x) {
      flow.dx(y, x) = row[static_cast<size_t>(x) * 2];
      flow.dy(y, x) = row[static_cast<size_t>(x) * 2 + 1];
    }
  }
  return flow;
}

namespace {

std::string frame_name(int t, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "frame_%04d.%s.png", t, kind);
  return buf;
}

std::string flow_name(int t, int x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "flow_%04d_to_%04d.flo", t, x);
  return buf;
}

std::string occl_name(int t, int x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "occl_%04d_to_%04d.png", t, x);
  return buf;
}

}  // namespace

void write_sequence(const fs::path& root, const std::string& name,
                    const SequenceSample& sample) {
  const fs::path dir = root / name;
  fs::create_directories(dir);
  const int T = sample.size();
  for (int t = 0; t < T; ++t) {
    const FrameSample& fr = sample.frames[static_cast<size_t>(t)];
    const int h = fr.color.h, w = fr.color.w;
    // color
    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
    const auto q = denormalize_rgb(fr.color);
    for (int c = 0; c < 3; ++c)
      for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i)
        rgb[i * 3 + static_cast<size_t>(c)] =
            static_cast<uint8_t>(q[static_cast<size_t>(c) * w * h + i]);
    write_png_rgb8(dir / frame_name(t, "color"), w, h, rgb);
    // depth: round(65535 * d)
    std::vector<uint16_t> d16(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < d16.size(); ++i)
      d16[i] = static_cast<uint16_t>(std::lround(
          std::clamp(fr.depth.data[i], 0.0, 1.0) * 65535.0));
    write_png_gray16(dir / frame_name(t, "depth"), w, h, d16);
    // seg class ids
    std::vector<uint8_t> seg(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < seg.size(); ++i)
      seg[i] = static_cast<uint8_t>(fr.seg.classes[i]);
    write_png_gray8(dir / frame_name(t, "seg"), w, h, seg);
    // mask: 255 = hole
    std::vector<uint8_t> mask(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = fr.mask.data[i] ? 255 : 0;
    write_png_gray8(dir / frame_name(t, "mask"), w, h, mask);
  }
  auto write_pair = [&](int t, int x, const FlowField& flow, const OcclusionMask& occ) {
    write_flo(dir / flow_name(t, x), flow);
    std::vector<uint8_t> o8(occ.data.size());
    for (size_t i = 0; i < o8.size(); ++i)
      o8[i] = static_cast<uint8_t>(std::lround(std::clamp(occ.data[i], 0.0, 1.0) * 255.0));
    write_png_gray8(dir / occl_name(t, x), occ.w, occ.h, o8);
  };
  for (int t = 1; t < T; ++t)
    if (sample.flow_fwd[static_cast<size_t>(t)])
      write_pair(t, t - 1, *sample.flow_fwd[static_cast<size_t>(t)],
                 *sample.occl[static_cast<size_t>(t)]);
  for (int t = 2; t < T; ++t)
    if (sample.flow_to_first[static_cast<size_t>(t)])
      write_pair(t, 0, *sample.flow_to_first[static_cast<size_t>(t)],
                 *sample.occl_first[static_cast<size_t>(t)]);
}

void write_manifest(const fs::path& root, const DatasetMeta& meta,
                    const std::vector<SequenceEntry>& sequences) {
  nlohmann::json j;
  j["depth_max"] = meta.depth_max;
  j["num_classes"] = meta.num_classes;
  j["background_ids"] = meta.background_ids;
  j["size"] = {meta.height, meta.width};
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : sequences) seqs.push_back({{"dir", s.dir}, {"frames", s.frames}});
  j["sequences"] = seqs;
  std::ofstream f(root / "manifest.json");
  if (!f) fail(root / "manifest.json", "cannot open for writing");
  f << j.dump(2) << "\n";
}

void write_dataset(const fs::path& root, const DatasetMeta& meta,
                   const std::vector<SequenceSample>& samples) {
  fs::create_directories(root);
  std::vector<SequenceEntry> entries;
  for (size_t i = 0; i < samples.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%04d", static_cast<int>(i));
    write_sequence(root, buf, samples[i]);
    entries.push_back({buf, samples[i].size()});
  }
  write_manifest(root, meta, entries);
}

DatasetManifest read_dataset(const fs::path& root) {
  const fs::path mpath = root / "manifest.json";
  std::ifstream f(mpath);
  if (!f) fail(mpath, "manifest not found");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail(mpath, std::string("manifest parse error: ") + e.what());
  }
  DatasetManifest m;
  m.root = root;
  m.meta.depth_max = j.at("depth_max").get<double>();
  m.meta.num_classes = j.at("num_classes").get<int>();
  m.meta.background_ids = j.at("background_ids").get<std::vector<int>>();
  m.meta.height = j.at("size")[0].get<int>();
  m.meta.width = j.at("size")[1].get<int>();
  for (const auto& s : j.at("sequences")) {
    SequenceEntry e;
    e.dir = s.at("dir").get<std::string>();
    e.frames = s.at("frames").get<int>();
    m.sequences.push_back(e);
  }
  // verify every referenced file exists
  for (const auto& e : m.sequences) {
    const fs::path dir = root / e.dir;
    for (int t = 0; t < e.frames; ++t)
      for (const char* kind : {"color", "depth", "seg", "mask"}) {
        const fs::path p = dir / frame_name(t, kind);
        if (!fs::exists(p)) fail(p, "file referenced by manifest is missing");
      }
    for (int t = 1; t < e.frames; ++t) {
      const fs::path p = dir / flow_name(t, t - 1);
      if (!fs::exists(p)) fail(p, "file referenced by manifest is missing");
    }
    for (int t = 2; t < e.frames; ++t) {
      const fs::path p = dir / flow_name(t, 0);
      if (!fs::exists(p)) fail(p, "file referenced by manifest is missing");
    }
  }
  return m;
}

SequenceSample read_sequence(const DatasetManifest& manifest, int index, int stride) {
  if (index < 0 || index >= static_cast<int>(manifest.sequences.size()))
    throw std::out_of_range("read_sequence: sequence index out of range");
  if (stride < 1) throw std::invalid_argument("read_sequence: stride must be >= 1");
  const SequenceEntry& e = manifest.sequences[static_cast<size_t>(index)];
  const fs::path dir = manifest.root / e.dir;
  SequenceSample s;
  std::vector<int> taken;
  for (int t = 0; t < e.frames; t += stride) taken.push_back(t);
  for (int t : taken) {
    FrameSample fr;
    int w = 0, h = 0;
    const auto rgb = read_png_rgb8(dir / frame_name(t, "color"), w, h);
    std::vector<int> planar(static_cast<size_t>(w) * h * 3);
    for (int c = 0; c < 3; ++c)
      for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i)
        planar[static_cast<size_t>(c) * w * h + i] = rgb[i * 3 + static_cast<size_t>(c)];
    fr.color = normalize_rgb(planar, h, w);
    const auto d16 = read_png_gray16(dir / frame_name(t, "depth"), w, h);
    fr.depth.h = h;
    fr.depth.w = w;
    fr.depth.depth_scale = manifest.meta.depth_max;
    fr.depth.data.resize(d16.size());
    for (size_t i = 0; i < d16.size(); ++i) fr.depth.data[i] = d16[i] / 65535.0;
    const auto seg8 = read_png_gray8(dir / frame_name(t, "seg"), w, h);
    fr.seg.h = h;
    fr.seg.w = w;
    fr.seg.num_classes = manifest.meta.num_classes;
    fr.seg.background_ids = manifest.meta.background_ids;
    fr.seg.classes.assign(seg8.begin(), seg8.end());
    const auto m8 = read_png_gray8(dir / frame_name(t, "mask"), w, h);
    fr.mask.h = h;
    fr.mask.w = w;
    fr.mask.data.resize(m8.size());
    for (size_t i = 0; i < m8.size(); ++i) fr.mask.data[i] = m8[i] ? 1 : 0;
    s.frames.push_back(std::move(fr));
  }
  const int T = s.size();
  s.flow_fwd.resize(static_cast<size_t>(T));
  s.flow_to_first.resize(static_cast<size_t>(T));
  s.occl.resize(static_cast<size_t>(T));
  s.occl_first.resize(static_cast<size_t>(T));
  if (stride == 1) {
    auto read_occl = [&](const fs::path& p) {
      int w = 0, h = 0;
      const auto o8 = read_png_gray8(p, w, h);
      OcclusionMask o;
      o.h = h;
      o.w = w;
      o.data.resize(o8.size());
      for (size_t i = 0; i < o8.size(); ++i) o.data[i] = o8[i] / 255.0;
      return o;
    };
    for (int t = 1; t < T; ++t) {
      s.flow_fwd[static_cast<size_t>(t)] = read_flo(dir / flow_name(t, t - 1));
      s.occl[static_cast<size_t>(t)] = read_occl(dir / occl_name(t, t - 1));
    }
    for (int t = 2; t < T; ++t) {
      s.flow_to_first[static_cast<size_t>(t)] = read_flo(dir / flow_name(t, 0));
      s.occl_first[static_cast<size_t>(t)] = read_occl(dir / occl_name(t, 0));
    }
  }
  return s;
}

}  // namespace rdi::synth
