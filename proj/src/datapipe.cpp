#include "hetnet/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "hetnet/image_io.hpp"

namespace fs = std::filesystem;

namespace hetnet {

Tensor derive_edge(const Tensor& mask, int radius, EdgeBorder border) {
  const Shape4 s = mask.shape();
  Tensor edge(s);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = mask.plane(b, c);
      double* dst = edge.plane(b, c);
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
          bool any = false, all = true;
          for (std::int64_t dy = -radius; dy <= radius; ++dy)
            for (std::int64_t dx = -radius; dx <= radius; ++dx) {
              const std::int64_t yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) {
                if (border == EdgeBorder::background) all = false;
                continue;
              }
              const bool v = src[yy * s.w + xx] >= 0.5;
              any = any || v;
              all = all && v;
            }
          dst[y * s.w + x] = (any && !all) ? 1.0 : 0.0;
        }
    }
  return edge;
}

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (train|test)");
}

namespace {

std::map<std::string, fs::path> scan_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset: missing directory '" + dir.string() + "'");
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

}  // namespace

std::vector<SampleRecord> load_dataset(const std::string& root, Split split, int edge_radius) {
  const fs::path base = fs::path(root) / to_string(split);
  auto images = scan_by_stem(base / "image");
  auto masks = scan_by_stem(base / "mask");

  std::string orphans;
  for (const auto& [stem, path] : images)
    if (!masks.count(stem)) orphans += " " + path.filename().string();
  for (const auto& [stem, path] : masks)
    if (!images.count(stem)) orphans += " " + path.filename().string();
  if (!orphans.empty())
    throw InputError("dataset: unmatched files under '" + base.string() + "':" + orphans);
  if (images.empty()) throw InputError("dataset: no samples under '" + base.string() + "'");

  std::vector<SampleRecord> records;
  bool warned = false;
  for (const auto& [stem, path] : images) {  // std::map iterates in id order
    SampleRecord rec;
    rec.id = stem;
    rec.image = load_image_rgb(path.string());
    MaskLoadResult m = load_mask(masks.at(stem).string());
    if (!m.was_binary && !warned) {
      std::cerr << "[dataset] warning: non-binary mask values in '" << masks.at(stem).string()
                << "', binarizing at 128\n";
      warned = true;
    }
    if (m.mask.shape().h != rec.image.shape().h || m.mask.shape().w != rec.image.shape().w)
      throw InputError("dataset: image/mask size mismatch for id '" + stem + "'");
    rec.mask = std::move(m.mask);
    rec.edge = derive_edge(rec.mask, edge_radius);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_dataset(const std::vector<SampleRecord>& records, const std::string& root, Split split) {
  const fs::path base = fs::path(root) / to_string(split);
  fs::create_directories(base / "image");
  fs::create_directories(base / "mask");
  std::string manifest;
  for (const auto& rec : records) {
    save_rgb_png((base / "image" / (rec.id + ".png")).string(), rec.image);
    save_gray_png((base / "mask" / (rec.id + ".png")).string(), rec.mask);
    manifest += rec.id + "\n";
  }
  std::ofstream mf(base / "manifest.txt");
  mf << manifest;
}

void AugmentationConfig::validate() const {
  if (scales.empty()) throw ConfigError("augment: scale list must be nonempty");
  for (double s : scales)
    if (s <= 0.0) throw ConfigError("augment: scales must be positive");
  const double min_scale = *std::min_element(scales.begin(), scales.end());
  if (crop_size <= 0 ||
      crop_size > static_cast<int>(std::floor(min_scale * static_cast<double>(base_size))))
    throw ConfigError("augment: crop size must fit the smallest scaled image");
  if (hflip_prob < 0.0 || hflip_prob > 1.0) throw ConfigError("augment: hflip_prob outside [0,1]");
}

AugmentResult augment_logged(const SampleRecord& rec, const AugmentationConfig& config,
                             std::mt19937& rng) {
  config.validate();
  const Shape4 s = rec.image.shape();
  (void)s;
  std::uniform_int_distribution<std::size_t> pick(0, config.scales.size() - 1);
  // multi-scale protocol: square resize to scale * base_size, then crop
  const std::int64_t target =
      std::llround(config.scales[pick(rng)] * static_cast<double>(config.base_size));
  AugTransform t;
  t.scaled_h = target;
  t.scaled_w = target;
  t.crop_h = config.crop_size;
  t.crop_w = config.crop_size;
  if (t.scaled_h < config.crop_size || t.scaled_w < config.crop_size)
    throw ConfigError("augment: crop larger than the scaled image");
  std::uniform_int_distribution<std::int64_t> dy(0, t.scaled_h - config.crop_size);
  std::uniform_int_distribution<std::int64_t> dx(0, t.scaled_w - config.crop_size);
  t.crop_y = dy(rng);
  t.crop_x = dx(rng);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  t.flipped = coin(rng) < config.hflip_prob;

  AugmentResult out;
  out.transform = t;
  out.record.id = rec.id;
  Tensor img = bilinear_resize(rec.image, t.scaled_h, t.scaled_w);
  Tensor msk = nearest_resize(rec.mask, t.scaled_h, t.scaled_w);
  Tensor edg = nearest_resize(rec.edge, t.scaled_h, t.scaled_w);
  img = crop(img, t.crop_y, t.crop_x, config.crop_size, config.crop_size);
  msk = crop(msk, t.crop_y, t.crop_x, config.crop_size, config.crop_size);
  edg = crop(edg, t.crop_y, t.crop_x, config.crop_size, config.crop_size);
  if (t.flipped) {
    img = hflip(img);
    msk = hflip(msk);
    edg = hflip(edg);
  }
  out.record.image = std::move(img);
  out.record.mask = std::move(msk);
  out.record.edge = std::move(edg);
  return out;
}

SampleRecord augment(const SampleRecord& rec, const AugmentationConfig& config,
                     std::mt19937& rng) {
  return augment_logged(rec, config, rng).record;
}

Tensor apply_transform_nearest(const Tensor& map, const AugTransform& t) {
  Tensor out = nearest_resize(map, t.scaled_h, t.scaled_w);
  out = crop(out, t.crop_y, t.crop_x, t.crop_h, t.crop_w);
  if (t.flipped) out = hflip(out);
  return out;
}

std::uint32_t derive_seed(unsigned seed, std::uint64_t epoch, std::uint64_t index) {
  std::uint64_t z = (static_cast<std::uint64_t>(seed) << 32) ^ (epoch * 0x9E3779B97F4A7C15ULL) ^
                    (index + 0xBF58476D1CE4E5B9ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return static_cast<std::uint32_t>((z ^ (z >> 31)) & 0xFFFFFFFFULL);
}

namespace {

void fill_rect(Tensor& img, std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1,
               const std::array<double, 3>& color) {
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = std::max<std::int64_t>(0, y0);
         y < std::min<std::int64_t>(img.shape().h, y1); ++y)
      for (std::int64_t x = std::max<std::int64_t>(0, x0);
           x < std::min<std::int64_t>(img.shape().w, x1); ++x)
        img.at(0, c, y, x) = color[static_cast<std::size_t>(c)];
}

void fill_ellipse(Tensor& img, std::int64_t cy, std::int64_t cx, std::int64_t ry, std::int64_t rx,
                  const std::array<double, 3>& color) {
  for (std::int64_t y = std::max<std::int64_t>(0, cy - ry);
       y < std::min<std::int64_t>(img.shape().h, cy + ry + 1); ++y)
    for (std::int64_t x = std::max<std::int64_t>(0, cx - rx);
         x < std::min<std::int64_t>(img.shape().w, cx + rx + 1); ++x) {
      const double ny = static_cast<double>(y - cy) / static_cast<double>(ry);
      const double nx = static_cast<double>(x - cx) / static_cast<double>(rx);
      if (ny * ny + nx * nx <= 1.0)
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = color[static_cast<std::size_t>(c)];
    }
}

}  // namespace

std::vector<SampleRecord> generate_synthetic(int n, int size, unsigned seed, int edge_radius) {
  if (size < 32) throw InputError("generate_synthetic: size must be >= 32");
  if (n < 1) throw InputError("generate_synthetic: n must be >= 1");
  std::vector<SampleRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int idx = 0; idx < n; ++idx) {
    std::mt19937 rng(derive_seed(seed, 0, static_cast<std::uint64_t>(idx)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    SampleRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%05d", idx);
    rec.id = buf;
    rec.image = Tensor(1, 3, size, size);
    // background: base color plus random rectangles and ellipses
    const std::array<double, 3> base{0.2 + 0.5 * u01(rng), 0.2 + 0.5 * u01(rng),
                                     0.2 + 0.5 * u01(rng)};
    fill_rect(rec.image, 0, 0, size, size, base);
    std::uniform_int_distribution<int> n_shapes(6, 12);
    std::uniform_int_distribution<std::int64_t> coord(0, size - 1);
    const int shapes = n_shapes(rng);
    for (int si = 0; si < shapes; ++si) {
      const std::array<double, 3> color{u01(rng), u01(rng), u01(rng)};
      const std::int64_t cy = coord(rng), cx = coord(rng);
      std::uniform_int_distribution<std::int64_t> ext(size / 16, size / 4);
      const std::int64_t ry = ext(rng), rx = ext(rng);
      if (u01(rng) < 0.5)
        fill_rect(rec.image, cy - ry, cx - rx, cy + ry, cx + rx, color);
      else
        fill_ellipse(rec.image, cy, cx, std::max<std::int64_t>(1, ry),
                     std::max<std::int64_t>(1, rx), color);
    }
    // mirror: rectangle with a flipped, darkened copy of another region,
    // framed by a 2-pixel bright band just outside the mask
    constexpr std::int64_t kFrame = 2;
    std::int64_t mw = 0, mh = 0, my = 0, mx = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      std::uniform_int_distribution<std::int64_t> extent(size / 4, size / 2);
      mh = extent(rng);
      mw = extent(rng);
      if (size - mh - 2 * kFrame <= 0 || size - mw - 2 * kFrame <= 0) continue;
      std::uniform_int_distribution<std::int64_t> py(kFrame, size - mh - kFrame);
      std::uniform_int_distribution<std::int64_t> px(kFrame, size - mw - kFrame);
      my = py(rng);
      mx = px(rng);
      placed = true;
    }
    if (!placed) throw InputError("generate_synthetic: could not place a mirror rectangle");
    // reflected content from a random source window
    std::uniform_int_distribution<std::int64_t> sy(0, size - mh);
    std::uniform_int_distribution<std::int64_t> sx(0, size - mw);
    const std::int64_t src_y = sy(rng), src_x = sx(rng);
    Tensor source = crop(rec.image, src_y, src_x, mh, mw);
    source = hflip(source);
    // bright frame around the rectangle, then its reflected interior
    const double frame_v = 0.9 + 0.1 * u01(rng);
    const std::array<double, 3> frame_color{frame_v, frame_v, frame_v};
    fill_rect(rec.image, my - kFrame, mx - kFrame, my + mh + kFrame, mx + mw + kFrame, frame_color);
    for (int c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < mh; ++y)
        for (std::int64_t x = 0; x < mw; ++x)
          rec.image.at(0, c, my + y, mx + x) = 0.8 * source.at(0, c, y, x);

    rec.mask = Tensor(1, 1, size, size);
    for (std::int64_t y = my; y < my + mh; ++y)
      for (std::int64_t x = mx; x < mx + mw; ++x) rec.mask.at(0, 0, y, x) = 1.0;
    rec.edge = derive_edge(rec.mask, edge_radius);
    out.push_back(std::move(rec));
  }
  return out;
}

Batch make_batch(const std::vector<SampleRecord>& records, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw InputError("make_batch: empty index list");
  const Shape4 s = records[idx[0]].image.shape();
  Batch batch;
  batch.images = Tensor(static_cast<std::int64_t>(idx.size()), 3, s.h, s.w);
  batch.masks = Tensor(static_cast<std::int64_t>(idx.size()), 1, s.h, s.w);
  batch.edges = Tensor(static_cast<std::int64_t>(idx.size()), 1, s.h, s.w);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const SampleRecord& rec = records[idx[i]];
    check_same_shape(rec.image, records[idx[0]].image, "make_batch");
    std::copy(rec.image.data(), rec.image.data() + rec.image.numel(),
              batch.images.data() + static_cast<std::int64_t>(i) * rec.image.numel());
    std::copy(rec.mask.data(), rec.mask.data() + rec.mask.numel(),
              batch.masks.data() + static_cast<std::int64_t>(i) * rec.mask.numel());
    std::copy(rec.edge.data(), rec.edge.data() + rec.edge.numel(),
              batch.edges.data() + static_cast<std::int64_t>(i) * rec.edge.numel());
  }
  return batch;
}

}  // namespace hetnet
