#include "ran/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ran {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_tensors(Writer& w, const std::vector<NamedTensor>& list) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
  for (const auto& nt : list) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(nt.name.size()));
    w.put_bytes(nt.name.data(), nt.name.size());
    const Shape& s = nt.value.shape;
    w.put<std::uint32_t>(4);
    for (Index d : {s.n, s.c, s.h, s.w}) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    const ArrayX<float> data = nt.value.data.cast<float>();
    w.put_bytes(data.data(), sizeof(float) * static_cast<std::size_t>(data.size()));
  }
}

std::vector<NamedTensor> get_tensors(Reader& r) {
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> list;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const auto len = r.get<std::uint32_t>("name length");
    if (len > 4096) throw FormatError("implausible tensor name length", at);
    std::string name(len, '\0');
    r.get_bytes(name.data(), len, "tensor name");
    const std::size_t rank_at = r.pos();
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank < 1 || rank > 4) throw FormatError("unsupported tensor rank " + std::to_string(rank), rank_at);
    Index dims[4] = {1, 1, 1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) dims[4 - rank + d] = r.get<std::uint32_t>("dimension");
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};
    ArrayX<float> data(shape.size());
    r.get_bytes(data.data(), sizeof(float) * static_cast<std::size_t>(shape.size()), "tensor data");
    list.push_back({std::move(name), Tensor(shape, data.cast<double>().eval())});
  }
  return list;
}

}  // namespace

Checkpoint Checkpoint::from_model(const RanModel& model, std::uint64_t iteration, const std::vector<ArrayXd>& momentum) {
  Checkpoint c;
  c.config = model.config();
  c.iteration = iteration;
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.parameters.push_back({params[i].name, params[i].value});
    if (i < momentum.size()) c.momentum.push_back({params[i].name, Tensor(params[i].value.shape, momentum[i])});
  }
  return c;
}

RanModel Checkpoint::to_model() const {
  std::vector<Parameter> params;
  for (const auto& nt : parameters) params.push_back({nt.name, nt.value, true});
  return RanModel(config, std::move(params));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const RanConfig& cfg = ckpt.config;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.variant));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.num_classes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.backbone_channels.size()));
  for (int c : cfg.backbone_channels) w.put<std::uint32_t>(static_cast<std::uint32_t>(c));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.decision_kernel));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.decision_dilation));
  w.put<double>(cfg.loss_weights.original);
  w.put<double>(cfg.loss_weights.reverse);
  w.put<double>(cfg.loss_weights.combined);
  w.put<std::uint8_t>(cfg.stop_grad_attention ? 1 : 0);
  w.put<std::uint64_t>(cfg.seed);
  put_tensors(w, ckpt.parameters);
  w.put<std::uint64_t>(ckpt.iteration);
  put_tensors(w, ckpt.momentum);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.get_bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);

  Checkpoint c;
  const std::size_t variant_at = r.pos();
  const auto variant = r.get<std::uint32_t>("variant");
  if (variant > static_cast<std::uint32_t>(Variant::ran_n)) throw FormatError("unknown variant", variant_at);
  c.config.variant = static_cast<Variant>(variant);
  c.config.num_classes = static_cast<int>(r.get<std::uint32_t>("num_classes"));
  const std::size_t layers_at = r.pos();
  const auto layers = r.get<std::uint32_t>("backbone layer count");
  if (layers > 64) throw FormatError("implausible backbone layer count", layers_at);
  c.config.backbone_channels.clear();
  for (std::uint32_t i = 0; i < layers; ++i)
    c.config.backbone_channels.push_back(static_cast<int>(r.get<std::uint32_t>("backbone channels")));
  c.config.decision_kernel = static_cast<int>(r.get<std::uint32_t>("decision_kernel"));
  c.config.decision_dilation = static_cast<int>(r.get<std::uint32_t>("decision_dilation"));
  c.config.loss_weights.original = r.get<double>("loss weight");
  c.config.loss_weights.reverse = r.get<double>("loss weight");
  c.config.loss_weights.combined = r.get<double>("loss weight");
  c.config.stop_grad_attention = r.get<std::uint8_t>("stop_grad_attention") != 0;
  c.config.seed = r.get<std::uint64_t>("seed");
  c.parameters = get_tensors(r);
  c.iteration = r.get<std::uint64_t>("iteration");
  c.momentum = get_tensors(r);
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const RanModel& model, const std::filesystem::path& path) {
  save_checkpoint(Checkpoint::from_model(model), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ran
