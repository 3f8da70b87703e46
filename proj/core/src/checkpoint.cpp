#include "dvd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dvd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dvd {

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const torch::Tensor& t) {
  const torch::Tensor c = t.detach().to(torch::kFloat32).contiguous();
  out.append(reinterpret_cast<const char*>(c.data_ptr<float>()), c.numel() * sizeof(float));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_tensor(torch::Tensor& dst) {
    const std::size_t n = dst.numel() * sizeof(float);
    need(n);
    torch::NoGradGuard ng;
    torch::Tensor src = torch::empty(dst.sizes(), torch::kFloat32);
    std::memcpy(src.data_ptr<float>(), bytes_.data() + pos_, n);
    dst.copy_(src);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, Trainer& trainer, const CheckpointMeta& meta) {
  auto& net = trainer.net();
  const auto params = net->named_parameters();
  json header;
  header["run_config"] = meta.run_config;
  header["config_hash"] = meta.config_hash;
  header["net"] = net->config();
  const auto& s = trainer.schedule();
  header["schedule"] = {{"T", s.T()}, {"beta_start", s.beta_start()}, {"beta_end", s.beta_end()}, {"eta", s.eta()}};
  const auto& o = trainer.options();
  header["trainer"] = {{"batch_size", o.batch_size},
                       {"lr", o.lr},
                       {"rollout_steps", o.step.rollout_steps},
                       {"tvcr", o.step.tvcr},
                       {"condition_clamp", o.step.condition_clamp},
                       {"grad_clip", o.step.grad_clip}};
  header["rng_state"] = trainer.rng().save_state();
  header["updates"] = trainer.updates();
  json names = json::array();
  for (const auto& p : params) names.push_back({{"name", p.key()}, {"shape", p.value().sizes().vec()}});
  header["parameters"] = names;

  std::string out = "DVDC";
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string h = header.dump();
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& p : params) put_tensor(out, p.value());
  auto& state = trainer.optimizer().state();
  for (const auto& p : params) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) {
      put<std::int64_t>(out, -1);
      continue;
    }
    auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
    put<std::int64_t>(out, st.step());
    put_tensor(out, st.exp_avg());
    put_tensor(out, st.exp_avg_sq());
  }

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError(tmp.string() + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  Reader rd(bytes, origin);
  if (rd.get_string(4) != "DVDC") throw FormatError(origin + ": not a checkpoint (bad magic)");
  const auto version = rd.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": checkpoint version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = rd.get<std::uint64_t>();
  json header;
  try {
    header = json::parse(rd.get_string(hlen));
  } catch (const json::exception& e) {
    throw FormatError(origin + ": corrupt checkpoint header (" + e.what() + ")");
  }

  LoadedCheckpoint out;
  try {
    out.meta.run_config = header.at("run_config");
    out.meta.config_hash = header.at("config_hash").get<std::string>();
    const NetConfig net_cfg = header.at("net").get<NetConfig>();
    const auto& s = header.at("schedule");
    const NoiseSchedule sched(s.at("T").get<int>(), s.at("beta_start").get<double>(),
                              s.at("beta_end").get<double>(), s.at("eta").get<double>());
    const auto& t = header.at("trainer");
    TrainerOptions opts;
    opts.batch_size = t.at("batch_size").get<int>();
    opts.lr = t.at("lr").get<double>();
    opts.step.rollout_steps = t.at("rollout_steps").get<int>();
    opts.step.tvcr = t.at("tvcr").get<bool>();
    opts.step.condition_clamp = t.at("condition_clamp").get<double>();
    opts.step.grad_clip = t.at("grad_clip").get<double>();
    out.trainer = std::make_unique<Trainer>(net_cfg, sched, opts, 0);
    out.trainer->rng().load_state(header.at("rng_state").get<std::string>());
    out.trainer->set_updates(header.at("updates").get<int64_t>());
  } catch (const json::exception& e) {
    throw FormatError(origin + ": checkpoint header missing fields (" + e.what() + ")");
  } catch (const InvalidArgument& e) {
    throw FormatError(origin + ": checkpoint header invalid (" + e.what() + ")");
  }

  auto params = out.trainer->net()->named_parameters();
  const auto& names = header.at("parameters");
  if (names.size() != params.size()) throw FormatError(origin + ": parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (names[i].at("name").get<std::string>() != p.key() ||
        names[i].at("shape").get<std::vector<int64_t>>() != p.value().sizes().vec()) {
      throw FormatError(origin + ": parameter layout mismatch at " + p.key());
    }
  }
  for (auto& p : params) rd.get_tensor(p.value());

  auto& state = out.trainer->optimizer().state();
  for (auto& p : params) {
    const auto step = rd.get<std::int64_t>();
    if (step < 0) continue;
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(step);
    torch::Tensor m = torch::zeros_like(p.value()), v = torch::zeros_like(p.value());
    rd.get_tensor(m);
    rd.get_tensor(v);
    st->exp_avg(m);
    st->exp_avg_sq(v);
    state[p.value().unsafeGetTensorImpl()] = std::move(st);
  }
  if (!rd.at_end()) throw FormatError(origin + ": trailing bytes in checkpoint");
  return out;
}

}  // namespace dvd
