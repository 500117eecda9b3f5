#include "csnn/snapshot.hpp"

#include <cstring>

#include "csnn/io.hpp"

namespace csnn {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f32v(const std::vector<float>& v) { raw(v.data(), v.size() * 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), end_(p + n) {}
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  float f32() {
    float v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::vector<float> f32v(std::size_t count) {
    std::vector<float> v(count);
    std::memcpy(v.data(), take(count * 4), count * 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (p_ + n > end_) throw DataError("snapshot truncated");
    const std::uint8_t* r = p_;
    p_ += n;
    return r;
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

}  // namespace

void save_snapshot(const Network& net, const std::filesystem::path& path) {
  Writer w;
  w.u64(net.master_seed());
  w.u64(net.step());
  w.u32(static_cast<std::uint32_t>(net.input_h()));
  w.u32(static_cast<std::uint32_t>(net.input_w()));
  w.u32(static_cast<std::uint32_t>(net.input_c()));
  w.str(net.spec().preset);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));

  for (const CsnnLayer& layer : net.layers()) {
    const LayerSpec& ls = layer.spec;
    w.u32(static_cast<std::uint32_t>(ls.heads));
    w.u32(static_cast<std::uint32_t>(ls.grid_h));
    w.u32(static_cast<std::uint32_t>(ls.grid_w));
    w.u32(static_cast<std::uint32_t>(ls.kernel.h));
    w.u32(static_cast<std::uint32_t>(ls.kernel.w));
    w.u32(static_cast<std::uint32_t>(ls.stride.h));
    w.u32(static_cast<std::uint32_t>(ls.stride.w));
    w.u8(ls.padding == Padding::same ? 1 : 0);
    w.u8(ls.mask_kind == MaskKind::channel ? 1 : 0);
    w.u8(ls.rule.base_rule == BaseRule::oja ? 1 : 0);
    w.u8(ls.rule.input_mod == InputMod::prefix_masks ? 1 : 0);
    w.u8(ls.rule.avg == MaskAvg::gated_patches ? 1 : 0);
    w.f32(ls.rule.gamma);
    w.f32(ls.delta);
    w.f32(ls.som_lr);
    w.f32(ls.mask_lr);
    w.u64(ls.train_begin);
    w.u64(ls.train_end);
    w.u8(ls.batch_norm ? 1 : 0);
    w.u8(ls.max_pool ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(layer.in_channels));

    for (const SomMap& map : layer.maps) w.f32v(map.weights);
    for (const NeuronMasks& masks : layer.masks) w.f32v(masks.values);
    w.f32(layer.bn.momentum);
    w.f32(layer.bn.eps);
    w.f32v(layer.bn.running_mean);
    w.f32v(layer.bn.running_var);
  }

  std::vector<std::uint8_t> file;
  const char magic[4] = {'C', 'S', 'N', 'N'};
  file.insert(file.end(), magic, magic + 4);
  const std::uint32_t version = kVersion;
  file.insert(file.end(), reinterpret_cast<const std::uint8_t*>(&version),
              reinterpret_cast<const std::uint8_t*>(&version) + 4);
  file.insert(file.end(), w.bytes().begin(), w.bytes().end());
  const std::uint32_t crc = crc32(w.bytes().data(), w.bytes().size());
  file.insert(file.end(), reinterpret_cast<const std::uint8_t*>(&crc),
              reinterpret_cast<const std::uint8_t*>(&crc) + 4);
  write_file_atomic(path, file.data(), file.size());
}

Network load_snapshot(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> file = read_file(path);
  if (file.size() < 12 || std::memcmp(file.data(), "CSNN", 4) != 0)
    throw DataError("not a CSNN snapshot: " + path.string());
  std::uint32_t version;
  std::memcpy(&version, file.data() + 4, 4);
  if (version != kVersion)
    throw DataError("unsupported snapshot version " + std::to_string(version));

  const std::uint8_t* payload = file.data() + 8;
  const std::size_t payload_len = file.size() - 12;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, file.data() + file.size() - 4, 4);
  if (crc32(payload, payload_len) != stored_crc)
    throw DataError("snapshot checksum mismatch: " + path.string());

  Reader r(payload, payload_len);
  const std::uint64_t seed = r.u64();
  const std::uint64_t step = r.u64();
  const std::size_t in_h = r.u32();
  const std::size_t in_w = r.u32();
  const std::size_t in_c = r.u32();
  const std::string preset = r.str();
  const std::size_t layer_count = r.u32();

  NetworkSpec spec;
  spec.preset = preset;
  std::vector<CsnnLayer> layers;
  for (std::size_t li = 0; li < layer_count; ++li) {
    LayerSpec ls;
    ls.heads = r.u32();
    ls.grid_h = r.u32();
    ls.grid_w = r.u32();
    ls.kernel.h = r.u32();
    ls.kernel.w = r.u32();
    ls.stride.h = r.u32();
    ls.stride.w = r.u32();
    ls.padding = r.u8() ? Padding::same : Padding::valid;
    ls.mask_kind = r.u8() ? MaskKind::channel : MaskKind::input;
    ls.rule.base_rule = r.u8() ? BaseRule::oja : BaseRule::hebb;
    ls.rule.input_mod = r.u8() ? InputMod::prefix_masks : InputMod::all_masks;
    ls.rule.avg = r.u8() ? MaskAvg::gated_patches : MaskAvg::all_patches;
    ls.rule.gamma = r.f32();
    ls.delta = r.f32();
    ls.som_lr = r.f32();
    ls.mask_lr = r.f32();
    ls.train_begin = r.u64();
    ls.train_end = r.u64();
    ls.batch_norm = r.u8() != 0;
    ls.max_pool = r.u8() != 0;

    CsnnLayer layer;
    layer.spec = ls;
    layer.in_channels = r.u32();
    const std::size_t dim = layer.patch_len();
    const std::size_t n = ls.grid_h * ls.grid_w;
    for (std::size_t head = 0; head < ls.heads; ++head) {
      SomMap map;
      map.grid_h = ls.grid_h;
      map.grid_w = ls.grid_w;
      map.dim = dim;
      map.weights = r.f32v(n * dim);
      layer.maps.push_back(std::move(map));
    }
    for (std::size_t head = 0; head < ls.heads; ++head) {
      NeuronMasks masks;
      masks.kind = ls.mask_kind;
      masks.count = n;
      masks.dim = layer.mask_dim();
      masks.values = r.f32v(n * masks.dim);
      layer.masks.push_back(std::move(masks));
    }
    layer.bn.momentum = r.f32();
    layer.bn.eps = r.f32();
    layer.bn.running_mean = r.f32v(ls.features());
    layer.bn.running_var = r.f32v(ls.features());

    spec.layers.push_back(ls);
    layers.push_back(std::move(layer));
  }

  return Network::restore(std::move(spec), std::move(layers), in_h, in_w,
                          in_c, seed, step);
}

}  // namespace csnn
