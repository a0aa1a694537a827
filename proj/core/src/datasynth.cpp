#include "dcvae/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dcvae/rng.hpp"

namespace dcvae {

bool DatasetArchive::operator==(const DatasetArchive& o) const {
  return config.family == o.config.family &&
         config.n_classes == o.config.n_classes &&
         config.per_class == o.config.per_class &&
         config.image_size == o.config.image_size &&
         config.seed == o.config.seed && pixels == o.pixels &&
         labels == o.labels;
}

namespace {

// ---- fixed-point scanline rasterizer (Q8 coords, 2x supersampling) ----

constexpr int kSS = 2;  // supersampling factor

struct PolyFP {
  std::vector<std::pair<std::int64_t, std::int64_t>> pts;  // Q8, ss space
};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

// Even-odd fill of a polygon into a byte mask (ss pixels).
void fill_poly(const PolyFP& poly, int w, int h, std::vector<std::uint8_t>& mask) {
  const std::size_t n = poly.pts.size();
  std::vector<std::int64_t> xs;
  for (int row = 0; row < h; ++row) {
    const std::int64_t ys = (static_cast<std::int64_t>(row) << 8) + 128;
    xs.clear();
    for (std::size_t e = 0; e < n; ++e) {
      auto [x0, y0] = poly.pts[e];
      auto [x1, y1] = poly.pts[(e + 1) % n];
      if (y0 == y1) continue;
      if (y0 > y1) {
        std::swap(x0, x1);
        std::swap(y0, y1);
      }
      if (ys < y0 || ys >= y1) continue;  // half-open edge span
      xs.push_back(x0 + floor_div((ys - y0) * (x1 - x0), y1 - y0));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      // cover sample centers c_j = j*256 + 128 with xs[i] <= c_j < xs[i+1]
      std::int64_t j0 = floor_div(xs[i] - 128 + 255, 256);
      std::int64_t j1 = floor_div(xs[i + 1] - 128 - 1, 256);
      j0 = std::max<std::int64_t>(j0, 0);
      j1 = std::min<std::int64_t>(j1, w - 1);
      for (std::int64_t j = j0; j <= j1; ++j)
        mask[static_cast<std::size_t>(row) * w + static_cast<std::size_t>(j)] = 1;
    }
  }
}

struct Vec2 {
  double x, y;
};

// Asymmetric glyphs (no rotational symmetry), unit space, y down.
const std::vector<std::vector<Vec2>>& glyphs() {
  static const std::vector<std::vector<Vec2>> g = {
      // arrow pointing +x
      {{-0.55, -0.22}, {0.12, -0.22}, {0.12, -0.52}, {0.68, 0.0},
       {0.12, 0.52}, {0.12, 0.22}, {-0.55, 0.22}},
      // kite / dart
      {{0.72, 0.0}, {-0.18, 0.46}, {-0.5, 0.0}, {-0.18, -0.46}},
      // L
      {{-0.5, -0.7}, {-0.08, -0.7}, {-0.08, 0.28}, {0.52, 0.28},
       {0.52, 0.7}, {-0.5, 0.7}},
      // T
      {{-0.62, -0.62}, {0.62, -0.62}, {0.62, -0.2}, {0.21, -0.2},
       {0.21, 0.7}, {-0.21, 0.7}, {-0.21, -0.2}, {-0.62, -0.2}},
  };
  return g;
}

PolyFP transform_quantize(const std::vector<Vec2>& shape, double theta,
                          double scale_px, double cx, double cy) {
  const double c = std::cos(theta), s = std::sin(theta);
  PolyFP out;
  out.pts.reserve(shape.size());
  for (const Vec2& v : shape) {
    const double x = (v.x * c - v.y * s) * scale_px + cx;
    const double y = (v.x * s + v.y * c) * scale_px + cy;
    // supersample space, quantized to 1/256 px
    out.pts.emplace_back(std::llround(x * kSS * 256.0),
                         std::llround(y * kSS * 256.0));
  }
  return out;
}

struct Rgb {
  std::uint8_t r, g, b;
};

Rgb hsv(float h, float s, float v) {
  h = h - std::floor(h);
  const float hf = h * 6.0f;
  const int i = static_cast<int>(hf) % 6;
  const float f = hf - std::floor(hf);
  const float p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  float r = 0, g = 0, b = 0;
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto u8 = [](float x) {
    return static_cast<std::uint8_t>(std::lround(x * 255.0f));
  };
  return {u8(r), u8(g), u8(b)};
}

// 2x2 box downsample of an ss-resolution RGB canvas into the archive.
void downsample_into(const std::vector<std::uint8_t>& canvas, int size,
                     std::uint8_t* out) {
  const int ssw = size * kSS;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        int acc = 0;
        for (int dy = 0; dy < kSS; ++dy)
          for (int dx = 0; dx < kSS; ++dx)
            acc += canvas[((static_cast<std::size_t>(y) * kSS + dy) * ssw +
                           (static_cast<std::size_t>(x) * kSS + dx)) *
                              3 +
                          ch];
        out[(static_cast<std::size_t>(y) * size + x) * 3 + ch] =
            static_cast<std::uint8_t>((acc + kSS * kSS / 2) / (kSS * kSS));
      }
}

void validate_config(const DatasetConfig& cfg) {
  if (cfg.n_classes < 2) throw ConfigError("dataset needs n_classes >= 2");
  if (cfg.per_class < 1) throw ConfigError("dataset needs per_class >= 1");
  if (cfg.image_size != 64)
    throw ConfigError("dataset image size is fixed at 64");
}

}  // namespace

GeneratedSet gen_rotation_set(const DatasetConfig& cfg) {
  if (cfg.family != Family::Rotation)
    throw ConfigError("gen_rotation_set: config family is not Rotation");
  validate_config(cfg);
  const int size = cfg.image_size;
  const int ssw = size * kSS;
  GeneratedSet out;
  out.archive.config = cfg;
  const std::size_t total =
      static_cast<std::size_t>(cfg.n_classes) * cfg.per_class;
  out.archive.pixels.resize(total * size * size * 3);
  out.archive.labels.resize(total);
  out.factors.resize(total);

  const Rgb bg = {245, 245, 245};
  std::vector<std::uint8_t> outer(static_cast<std::size_t>(ssw) * ssw),
      inner(outer.size()), canvas(outer.size() * 3);

  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i) / cfg.per_class;
    RngState rng(RngState::derive(cfg.seed, i));

    // label-irrelevant style factors, drawn independently of the class
    const int kind = static_cast<int>(rng.below(
        static_cast<std::uint32_t>(glyphs().size())));
    const float stroke = 0.10f + 0.20f * rng.uniform();
    const float hue = rng.uniform();
    const double theta =
        2.0 * 3.14159265358979323846 * label / cfg.n_classes;

    const Rgb fill = hsv(hue, 0.75f, 0.85f);
    const Rgb rim = hsv(hue, 0.90f, 0.35f);

    PolyFP po = transform_quantize(glyphs()[static_cast<std::size_t>(kind)],
                                   theta, 26.0, size / 2.0, size / 2.0);
    PolyFP pi = transform_quantize(glyphs()[static_cast<std::size_t>(kind)],
                                   theta, 26.0 * (1.0 - stroke), size / 2.0,
                                   size / 2.0);
    std::fill(outer.begin(), outer.end(), 0);
    std::fill(inner.begin(), inner.end(), 0);
    fill_poly(po, ssw, ssw, outer);
    fill_poly(pi, ssw, ssw, inner);
    for (std::size_t px = 0; px < outer.size(); ++px) {
      const Rgb c = inner[px] ? fill : (outer[px] ? rim : bg);
      canvas[px * 3 + 0] = c.r;
      canvas[px * 3 + 1] = c.g;
      canvas[px * 3 + 2] = c.b;
    }
    downsample_into(canvas, size,
                    out.archive.pixels.data() +
                        i * static_cast<std::size_t>(size) * size * 3);
    out.archive.labels[i] = static_cast<std::uint32_t>(label);
    out.factors[i] = FactorRecord{label, kind, stroke, hue,
                                  static_cast<float>(theta), 26.0f, 0, 0};
  }
  return out;
}

GeneratedSet gen_style_set(const DatasetConfig& cfg) {
  if (cfg.family != Family::StyleIdentity)
    throw ConfigError("gen_style_set: config family is not StyleIdentity");
  validate_config(cfg);
  const int size = cfg.image_size;
  const int ssw = size * kSS;
  GeneratedSet out;
  out.archive.config = cfg;
  const std::size_t total =
      static_cast<std::size_t>(cfg.n_classes) * cfg.per_class;
  out.archive.pixels.resize(total * size * size * 3);
  out.archive.labels.resize(total);
  out.factors.resize(total);

  // identity palettes: fixed per class, derived from the dataset seed
  struct Palette {
    Rgb bg, fg_a, fg_b;
    int period;  // stripe period in image pixels
  };
  std::vector<Palette> palettes(static_cast<std::size_t>(cfg.n_classes));
  for (int k = 0; k < cfg.n_classes; ++k) {
    RngState prng(RngState::derive(cfg.seed ^ 0x5041u, static_cast<std::uint64_t>(k)));
    const float h = (k + 0.5f) / cfg.n_classes + 0.04f * (prng.uniform() - 0.5f);
    palettes[static_cast<std::size_t>(k)] = {
        hsv(h, 0.22f, 0.95f), hsv(h, 0.85f, 0.75f),
        hsv(h + 0.13f, 0.80f, 0.45f), 3 + static_cast<int>(prng.below(7))};
  }

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(ssw) * ssw),
      canvas(mask.size() * 3);

  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i) / cfg.per_class;
    RngState rng(RngState::derive(cfg.seed, i));

    // label-irrelevant spatial factors
    const float rot = 2.0f * 3.14159265f * rng.uniform();
    const float scale = 18.0f + 9.0f * rng.uniform();
    const float dx = -7.0f + 14.0f * rng.uniform();
    const float dy = -7.0f + 14.0f * rng.uniform();

    const Palette& pal = palettes[static_cast<std::size_t>(label)];
    PolyFP poly = transform_quantize(glyphs()[0], rot, scale,
                                     size / 2.0 + dx, size / 2.0 + dy);
    std::fill(mask.begin(), mask.end(), 0);
    fill_poly(poly, ssw, ssw, mask);
    const int period_ss = pal.period * kSS;
    for (int y = 0; y < ssw; ++y)
      for (int x = 0; x < ssw; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * ssw + x;
        Rgb c = pal.bg;
        if (mask[px]) c = ((x / period_ss) % 2 == 0) ? pal.fg_a : pal.fg_b;
        canvas[px * 3 + 0] = c.r;
        canvas[px * 3 + 1] = c.g;
        canvas[px * 3 + 2] = c.b;
      }
    downsample_into(canvas, size,
                    out.archive.pixels.data() +
                        i * static_cast<std::size_t>(size) * size * 3);
    out.archive.labels[i] = static_cast<std::uint32_t>(label);
    out.factors[i] = FactorRecord{label, 0, 0, 0, rot, scale, dx, dy};
  }
  return out;
}

GeneratedSet gen_dataset(const DatasetConfig& cfg) {
  return cfg.family == Family::Rotation ? gen_rotation_set(cfg)
                                        : gen_style_set(cfg);
}

// ---- archive I/O ----

namespace {
constexpr char kMagic[6] = {'D', 'S', 'E', 'T', '1', '\0'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_archive(const std::string& path, const DatasetArchive& archive) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kMagic, 6);
  auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
  auto w64 = [&](std::uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); };
  w32(kVersion);
  const std::uint8_t fam = static_cast<std::uint8_t>(archive.config.family);
  f.write(reinterpret_cast<const char*>(&fam), 1);
  w32(static_cast<std::uint32_t>(archive.config.n_classes));
  w32(static_cast<std::uint32_t>(archive.config.per_class));
  w32(static_cast<std::uint32_t>(archive.config.image_size));
  w64(archive.config.seed);
  w32(static_cast<std::uint32_t>(archive.count()));
  const std::size_t img_bytes = static_cast<std::size_t>(archive.config.image_size) *
                                archive.config.image_size * 3;
  for (std::size_t i = 0; i < archive.count(); ++i) {
    w32(archive.labels[i]);
    f.write(reinterpret_cast<const char*>(archive.image(i)),
            static_cast<std::streamsize>(img_bytes));
  }
  f.flush();
  if (!f) throw IoError("write failed for '" + path + "'");
}

DatasetArchive load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  f.seekg(0, std::ios::end);
  const std::int64_t actual = f.tellg();
  f.seekg(0);

  char magic[6];
  f.read(magic, 6);
  if (f.gcount() != 6 || std::memcmp(magic, kMagic, 6) != 0)
    throw IoError("'" + path + "' is not a DSET1 archive");
  auto r32 = [&](const char* what) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (f.gcount() != 4)
      throw IoError(std::string("archive truncated reading ") + what);
    return v;
  };
  const std::uint32_t version = r32("version");
  if (version != kVersion)
    throw IoError("unsupported archive version " + std::to_string(version));
  DatasetArchive a;
  std::uint8_t fam = 0;
  f.read(reinterpret_cast<char*>(&fam), 1);
  if (fam > 1) throw IoError("invalid family byte in archive");
  a.config.family = static_cast<Family>(fam);
  a.config.n_classes = static_cast<int>(r32("n_classes"));
  a.config.per_class = static_cast<int>(r32("per_class"));
  a.config.image_size = static_cast<int>(r32("image_size"));
  std::uint64_t seed = 0;
  f.read(reinterpret_cast<char*>(&seed), 8);
  a.config.seed = seed;
  const std::uint32_t count = r32("count");

  const std::size_t img_bytes = static_cast<std::size_t>(a.config.image_size) *
                                a.config.image_size * 3;
  const std::int64_t expected =
      6 + 4 + 1 + 4 + 4 + 4 + 8 + 4 +
      static_cast<std::int64_t>(count) * static_cast<std::int64_t>(4 + img_bytes);
  if (actual != expected)
    throw IoError("archive '" + path + "' truncated or padded: expected " +
                  std::to_string(expected) + " bytes, got " +
                  std::to_string(actual));

  a.labels.resize(count);
  a.pixels.resize(static_cast<std::size_t>(count) * img_bytes);
  for (std::uint32_t i = 0; i < count; ++i) {
    a.labels[i] = r32("label");
    f.read(reinterpret_cast<char*>(a.pixels.data() + i * img_bytes),
           static_cast<std::streamsize>(img_bytes));
    if (f.gcount() != static_cast<std::streamsize>(img_bytes))
      throw IoError("archive truncated reading image " + std::to_string(i));
  }
  return a;
}

Tensor images_to_tensor(const DatasetArchive& archive,
                        const std::vector<std::size_t>& indices) {
  const int size = archive.config.image_size;
  Tensor t({static_cast<int>(indices.size()), size, size, 3});
  float* d = t.data();
  const std::size_t img = static_cast<std::size_t>(size) * size * 3;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= archive.count())
      throw ShapeError("image index out of range");
    const std::uint8_t* src = archive.image(indices[i]);
    for (std::size_t k = 0; k < img; ++k)
      d[i * img + k] = static_cast<float>(src[k]) / 127.5f - 1.0f;
  }
  return t;
}

std::vector<int> labels_of(const DatasetArchive& archive,
                           const std::vector<std::size_t>& indices) {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[i] = static_cast<int>(archive.labels[indices[i]]);
  return out;
}

std::vector<std::uint8_t> tensor_to_u8(const Tensor& images) {
  std::vector<std::uint8_t> out(images.numel());
  const float* d = images.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    float v = (d[i] + 1.0f) * 127.5f;
    v = std::min(255.0f, std::max(0.0f, v));
    out[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

}  // namespace dcvae
