#include "svrdqn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace svrdqn {

namespace {

constexpr std::uint32_t kMagic = 0x44525653;  // "SVRD"
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kWeightsMagic = 0x57525653;  // "SVRW"

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  }
  void u32(std::uint32_t x) { raw(&x, sizeof x); }
  void u64(std::uint64_t x) { raw(&x, sizeof x); }
  void u8(std::uint8_t x) { raw(&x, sizeof x); }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void doubles(std::span<const double> xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint: write failed");
  }

 private:
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("checkpoint: cannot open " + path);
  }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  std::uint8_t u8() { return read<std::uint8_t>(); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    if (n > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt length field");
    std::vector<double> xs(n);
    for (auto& x : xs) x = f64();
    return xs;
  }

 private:
  template <typename T>
  T read() {
    T x;
    in_.read(reinterpret_cast<char*>(&x), sizeof x);
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return x;
  }
  std::ifstream in_;
};

void write_param_vector(Writer& w, const ParamVector& v) {
  w.u64(v.layout().size());
  for (const auto& b : v.layout()) {
    w.u64(b.rows);
    w.u64(b.cols);
  }
  w.doubles(v.values());
}

ParamVector read_param_vector(Reader& r) {
  const std::uint64_t nblocks = r.u64();
  if (nblocks > (1ull << 20)) throw std::runtime_error("checkpoint: corrupt layout");
  std::vector<BlockShape> layout(nblocks);
  for (auto& b : layout) {
    b.rows = r.u64();
    b.cols = r.u64();
  }
  std::vector<double> data = r.doubles();
  return ParamVector(std::move(data), std::move(layout));
}

}  // namespace

void save_checkpoint(const std::string& path, const TrialCheckpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.u32(kMagic);
    w.u32(kVersion);
    w.u64(ck.trial_seed);

    w.u64(ck.layer_sizes.size());
    for (std::size_t s : ck.layer_sizes) w.u64(s);
    w.u64(ck.hidden_acts.size());
    for (Activation a : ck.hidden_acts) w.u8(a == Activation::Relu ? 0 : 1);
    write_param_vector(w, ck.online_weights);
    write_param_vector(w, ck.target_weights);

    w.f64(ck.gamma);
    w.u64(ck.sync_period);
    w.u64(ck.steps_since_sync);

    w.f64(ck.adam_cfg.alpha);
    w.f64(ck.adam_cfg.beta1);
    w.f64(ck.adam_cfg.beta2);
    w.f64(ck.adam_cfg.epsilon);
    w.u64(ck.adam_t);
    write_param_vector(w, ck.adam_m);
    write_param_vector(w, ck.adam_v);

    w.u8(ck.has_svrg_anchor ? 1 : 0);
    if (ck.has_svrg_anchor) {
      write_param_vector(w, ck.svrg_anchor_w);
      write_param_vector(w, ck.svrg_anchor_grad);
    }

    w.u64(ck.frame);
    w.u64(ck.iterations);
    w.f64(ck.last_loss);
    w.f64(ck.random_return);
    w.doubles(ck.observation);
    for (std::uint64_t x : ck.train_rng_state) w.u64(x);
    w.u64(ck.env_words.size());
    for (std::uint64_t x : ck.env_words) w.u64(x);

    w.u64(ck.buffer_capacity);
    w.u64(ck.buffer_cursor);
    w.u8(ck.has_buffer_contents ? 1 : 0);
    if (ck.has_buffer_contents) {
      w.u64(ck.buffer_contents.size());
      for (const Transition& tr : ck.buffer_contents) {
        w.doubles(tr.state);
        w.u64(tr.action);
        w.f64(tr.reward);
        w.doubles(tr.next_state);
        w.u8(tr.terminal ? 1 : 0);
      }
    }

    w.u64(ck.csv_bytes);
    w.u64(ck.wall_ms_base);
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

TrialCheckpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  if (r.u32() != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  TrialCheckpoint ck;
  ck.trial_seed = r.u64();

  const std::uint64_t nsizes = r.u64();
  if (nsizes < 2 || nsizes > 64) throw std::runtime_error("checkpoint: corrupt layer sizes");
  ck.layer_sizes.resize(nsizes);
  for (auto& s : ck.layer_sizes) s = r.u64();
  const std::uint64_t nacts = r.u64();
  if (nacts != nsizes - 2) throw std::runtime_error("checkpoint: corrupt activations");
  ck.hidden_acts.resize(nacts);
  for (auto& a : ck.hidden_acts) a = r.u8() == 0 ? Activation::Relu : Activation::Tanh;
  ck.online_weights = read_param_vector(r);
  ck.target_weights = read_param_vector(r);

  ck.gamma = r.f64();
  ck.sync_period = r.u64();
  ck.steps_since_sync = r.u64();

  ck.adam_cfg.alpha = r.f64();
  ck.adam_cfg.beta1 = r.f64();
  ck.adam_cfg.beta2 = r.f64();
  ck.adam_cfg.epsilon = r.f64();
  ck.adam_t = r.u64();
  ck.adam_m = read_param_vector(r);
  ck.adam_v = read_param_vector(r);

  ck.has_svrg_anchor = r.u8() != 0;
  if (ck.has_svrg_anchor) {
    ck.svrg_anchor_w = read_param_vector(r);
    ck.svrg_anchor_grad = read_param_vector(r);
  }

  ck.frame = r.u64();
  ck.iterations = r.u64();
  ck.last_loss = r.f64();
  ck.random_return = r.f64();
  ck.observation = r.doubles();
  for (auto& x : ck.train_rng_state) x = r.u64();
  const std::uint64_t nwords = r.u64();
  if (nwords > 1024) throw std::runtime_error("checkpoint: corrupt environment state");
  ck.env_words.resize(nwords);
  for (auto& x : ck.env_words) x = r.u64();

  ck.buffer_capacity = r.u64();
  ck.buffer_cursor = r.u64();
  ck.has_buffer_contents = r.u8() != 0;
  if (ck.has_buffer_contents) {
    const std::uint64_t n = r.u64();
    if (n > ck.buffer_capacity) throw std::runtime_error("checkpoint: buffer overflows capacity");
    ck.buffer_contents.resize(n);
    for (auto& tr : ck.buffer_contents) {
      tr.state = r.doubles();
      tr.action = r.u64();
      tr.reward = r.f64();
      tr.next_state = r.doubles();
      tr.terminal = r.u8() != 0;
    }
  }

  ck.csv_bytes = r.u64();
  ck.wall_ms_base = r.u64();
  return ck;
}

void save_weights(const std::string& path, const MlpNetwork& net) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.u32(kWeightsMagic);
    w.u32(kVersion);
    w.u64(net.layer_sizes().size());
    for (std::size_t s : net.layer_sizes()) w.u64(s);
    w.u64(net.hidden_activations().size());
    for (Activation a : net.hidden_activations()) w.u8(a == Activation::Relu ? 0 : 1);
    w.doubles(net.weights().values());
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

MlpNetwork load_weights(const std::string& path) {
  Reader r(path);
  if (r.u32() != kWeightsMagic) throw std::runtime_error("weights: bad magic in " + path);
  if (r.u32() != kVersion) throw std::runtime_error("weights: unsupported version");
  const std::uint64_t nsizes = r.u64();
  if (nsizes < 2 || nsizes > 64) throw std::runtime_error("weights: corrupt layer sizes");
  std::vector<std::size_t> sizes(nsizes);
  for (auto& s : sizes) s = r.u64();
  const std::uint64_t nacts = r.u64();
  if (nacts != nsizes - 2) throw std::runtime_error("weights: corrupt activations");
  std::vector<Activation> acts(nacts);
  for (auto& a : acts) a = r.u8() == 0 ? Activation::Relu : Activation::Tanh;
  std::vector<double> data = r.doubles();

  MlpNetwork net(sizes, acts);
  net.set_weights(ParamVector(std::move(data), MlpNetwork::weight_layout(sizes)));
  return net;
}

}  // namespace svrdqn
