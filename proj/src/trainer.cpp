#include "acconet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

namespace acconet::train {

namespace {

constexpr const char* kCheckpointFormat = "acconet-checkpoint";

std::map<std::string, BackboneFactory>& registry() {
  static std::map<std::string, BackboneFactory> r{
      {"vgg16-shaped", [](const TrainConfig& cfg) -> std::unique_ptr<encoder::Backbone> {
         encoder::BackboneSource src;
         src.seed = cfg.seed;
         src.init.std = cfg.init_std;
         if (!cfg.backbone_weights.empty()) {
           src.kind = encoder::BackboneSource::Kind::pretrained_file;
           src.path = cfg.backbone_weights;
         }
         return encoder::init_backbone(cfg.schedule(), src);
       }}};
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument("invalid " + field + ": " + why);
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string csv_header() {
  std::string h = "iteration,epoch,lr";
  for (int t = 1; t <= kLevels; ++t) h += ",bce" + std::to_string(t);
  for (int t = 1; t <= kLevels; ++t) h += ",iou" + std::to_string(t);
  return h + ",total";
}

std::string csv_row(const IterationLog& log) {
  std::ostringstream os;
  os.precision(10);
  os << log.iteration << ',' << log.epoch << ',' << log.lr;
  for (double v : log.loss.bce) os << ',' << v;
  for (double v : log.loss.iou) os << ',' << v;
  os << ',' << log.loss.total;
  return os.str();
}

// Keeps the header and the rows of iterations the checkpoint already covers,
// so a resumed run does not duplicate lines written after the last save.
void trim_log(const fs::path& path, std::int64_t keep_iterations) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (lines.empty()) {
      lines.push_back(line);
      continue;
    }
    if (std::stoll(line.substr(0, line.find(','))) < keep_iterations) lines.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  require(lr > 0 && std::isfinite(lr), "lr", "must be positive");
  require(decay_epoch >= 0, "decay_epoch", "must be non-negative");
  require(decay_factor > 0, "decay_factor", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(adam_beta1 >= 0 && adam_beta1 < 1, "adam_beta1", "must lie in [0, 1)");
  require(adam_beta2 >= 0 && adam_beta2 < 1, "adam_beta2", "must lie in [0, 1)");
  require(adam_eps > 0, "adam_eps", "must be positive");
  require(weight_decay >= 0, "weight_decay", "must be non-negative");
  require(grad_clip >= 0, "grad_clip", "must be non-negative");
  require(max_iterations >= 0, "max_iterations", "must be non-negative");
  require(backbone_registered(backbone), "backbone", "no backbone named '" + backbone + "'");
  data::Normalization::named(normalization);
}

ShapeSchedule TrainConfig::schedule() const {
  return micro ? ShapeSchedule::micro() : ShapeSchedule::standard();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc = ModelConfig::for_ablation(ablation, schedule());
  mc.init.std = init_std;
  return mc;
}

std::string TrainConfig::fingerprint() const {
  const ModelConfig mc = model_config();
  std::ostringstream os;
  os << "schedule=" << mc.schedule.input_size;
  for (int c : mc.schedule.channels) os << ':' << c;
  os << ";backbone=" << backbone << ";ablation=" << to_string(ablation)
     << ";normalization=" << normalization << ";ca=" << mc.ca_reduction
     << ";sa=" << mc.sa_kernel;
  return hex64(fnv1a(os.str()));
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  return epoch < cfg.decay_epoch ? cfg.lr : cfg.lr / cfg.decay_factor;
}

void register_backbone(const std::string& name, BackboneFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

bool backbone_registered(const std::string& name) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  return registry().count(name) > 0;
}

std::unique_ptr<AcconetModel> build_model(const TrainConfig& cfg) {
  BackboneFactory factory;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(cfg.backbone);
    if (it == registry().end()) {
      throw std::invalid_argument("no backbone named '" + cfg.backbone + "'");
    }
    factory = it->second;
  }
  auto model = std::make_unique<AcconetModel>(cfg.model_config(), factory(cfg));
  // Distinct stream from the backbone's so both stay reproducible on their own.
  model->init_added_layers(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  return model;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::step(const std::vector<nn::Parameter*>& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (nn::Parameter* p : params) {
    if (!p->touched) continue;
    Moments& s = state_[p->name];
    if (s.m.empty()) {
      s.m = Tensor(p->value.shape());
      s.v = Tensor(p->value.shape());
    }
    Real* w = p->value.data();
    const Real* g = p->grad.data();
    Real* m = s.m.data();
    Real* v = s.v.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::save(io::TensorArchive& ar) const {
  ar.meta["adam.steps"] = std::to_string(t_);
  for (const auto& [name, s] : state_) {
    ar.tensors["adam.m/" + name] = s.m;
    ar.tensors["adam.v/" + name] = s.v;
  }
}

void Adam::load(const io::TensorArchive& ar) {
  auto it = ar.meta.find("adam.steps");
  if (it == ar.meta.end()) throw io::ArchiveError("checkpoint lacks optimizer state");
  t_ = std::stoll(it->second);
  state_.clear();
  const std::string prefix = "adam.m/";
  for (const auto& [key, m] : ar.tensors) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string name = key.substr(prefix.size());
    auto v = ar.tensors.find("adam.v/" + name);
    if (v == ar.tensors.end()) throw io::ArchiveError("missing adam.v/" + name);
    state_[name] = {m, v->second};
  }
}

double clip_grad_norm(const std::vector<nn::Parameter*>& params, double max_norm) {
  double sq = 0;
  for (const nn::Parameter* p : params) {
    if (!p->touched) continue;
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (nn::Parameter* p : params)
      if (p->touched) p->grad *= s;
  }
  return norm;
}

NonFiniteLossError::NonFiniteLossError(std::int64_t it, double value)
    : std::runtime_error("non-finite loss (" + std::to_string(value) + ") at iteration " +
                         std::to_string(it)),
      iteration(it) {}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      adam_(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps, cfg_.weight_decay) {
  cfg_.validate();
  model_ = build_model(cfg_);
}

StepResult Trainer::step(const data::Batch& batch, double lr) {
  model_->zero_grad();
  AcconetModel::Trace trace;
  const AcconetModel::Output out = model_->forward(batch.images, true, &trace);
  LevelTensors grads;
  StepResult r;
  r.lr = lr;
  r.loss = loss::total_loss(out.decoder.saliency, batch.masks, cfg_.loss_mode, &grads);
  if (!std::isfinite(r.loss.total)) throw NonFiniteLossError(iteration_, r.loss.total);
  model_->backward(trace, grads);
  const auto params = model_->parameters().params;
  if (cfg_.grad_clip > 0) clip_grad_norm(params, cfg_.grad_clip);
  adam_.step(params, lr);
  ++iteration_;
  return r;
}

void save_model_state(AcconetModel& model, io::TensorArchive& ar) {
  const nn::ParameterRefs refs = model.parameters();
  for (const nn::Parameter* p : refs.params) ar.tensors["param/" + p->name] = p->value;
  for (const nn::Buffer* b : refs.buffers) ar.tensors["buffer/" + b->name] = b->value;
}

void load_model_state(AcconetModel& model, const io::TensorArchive& ar) {
  const nn::ParameterRefs refs = model.parameters();
  std::vector<std::string> bad;
  auto fetch = [&](const std::string& key, Tensor& dst) {
    auto it = ar.tensors.find(key);
    if (it == ar.tensors.end() || !(it->second.shape() == dst.shape())) {
      bad.push_back(key);
      return;
    }
    dst = it->second;
  };
  for (nn::Parameter* p : refs.params) fetch("param/" + p->name, p->value);
  for (nn::Buffer* b : refs.buffers) fetch("buffer/" + b->name, b->value);
  if (!bad.empty()) {
    std::string msg = "checkpoint does not match the model; missing or mis-shaped:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw io::ArchiveError(msg);
  }
}

void Trainer::save_checkpoint(const fs::path& path) const {
  io::TensorArchive ar;
  ar.meta["format"] = kCheckpointFormat;
  ar.meta["fingerprint"] = cfg_.fingerprint();
  ar.meta["epoch"] = std::to_string(epoch_);
  ar.meta["iteration"] = std::to_string(iteration_);
  ar.meta["ablation"] = to_string(cfg_.ablation);
  ar.meta["backbone"] = cfg_.backbone;
  ar.meta["micro"] = cfg_.micro ? "true" : "false";
  save_model_state(*model_, ar);
  adam_.save(ar);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  // Write then rename so an interrupted save never leaves a truncated file
  // under the final name.
  const fs::path tmp = path.string() + ".tmp";
  io::save_archive(tmp, ar);
  fs::rename(tmp, path);
}

namespace {

io::TensorArchive load_checked(const fs::path& path, const TrainConfig& cfg) {
  io::TensorArchive ar = io::load_archive(path);
  auto fmt = ar.meta.find("format");
  if (fmt == ar.meta.end() || fmt->second != kCheckpointFormat) {
    throw io::ArchiveError(path.string() + " is not a training checkpoint");
  }
  const std::string want = cfg.fingerprint();
  const std::string have = ar.meta.count("fingerprint") ? ar.meta.at("fingerprint") : "";
  if (have != want) {
    throw FingerprintMismatchError("checkpoint " + path.string() + " has config fingerprint " +
                                   have + " but the current config hashes to " + want);
  }
  return ar;
}

}  // namespace

void Trainer::load_checkpoint(const fs::path& path) {
  const io::TensorArchive ar = load_checked(path, cfg_);
  load_model_state(*model_, ar);
  adam_.load(ar);
  epoch_ = std::stoi(ar.meta.at("epoch"));
  iteration_ = std::stoll(ar.meta.at("iteration"));
}

fs::path latest_checkpoint(const fs::path& out_dir) {
  const fs::path dir = out_dir / "checkpoints";
  if (!fs::is_directory(dir)) return {};
  fs::path best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".ckpt") {
      if (best.empty() || name > best.filename().string()) best = e.path();
    }
  }
  return best;
}

TrainResult train(const TrainConfig& cfg, const fs::path& dataset_root,
                  const fs::path& out_dir,
                  const std::function<void(const IterationLog&)>& on_iteration) {
  cfg.validate();
  auto pairs = data::scan_split(dataset_root, data::Split::train);
  if (pairs.empty()) {
    throw std::runtime_error("no training pairs under " +
                             (dataset_root / "train").string());
  }
  const data::TrainingSet set(std::move(pairs), cfg.schedule().input_size,
                              data::Normalization::named(cfg.normalization), cfg.augment);

  Trainer trainer(cfg);
  fs::create_directories(out_dir / "checkpoints");
  const fs::path log_path = out_dir / kLogFile;
  TrainResult result;
  if (const fs::path ckpt = latest_checkpoint(out_dir); !ckpt.empty()) {
    trainer.load_checkpoint(ckpt);
    trim_log(log_path, trainer.iteration());
    result.last_checkpoint = ckpt;
  } else {
    std::ofstream(log_path, std::ios::trunc) << csv_header() << '\n';
  }
  std::ofstream log(log_path, std::ios::app);

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  auto budget_left = [&] {
    return cfg.max_iterations == 0 || trainer.iteration() < cfg.max_iterations;
  };
  for (int epoch = trainer.epoch(); epoch < cfg.epochs && budget_left(); ++epoch) {
    const double lr = lr_at(epoch, cfg);
    const std::vector<std::size_t> order = set.epoch_order(cfg.seed, epoch);
    for (std::size_t start = 0; start < order.size() && budget_left(); start += batch_size) {
      const std::size_t len = std::min(batch_size, order.size() - start);
      const data::Batch batch =
          set.batch(std::span<const std::size_t>(order.data() + start, len));
      IterationLog entry;
      entry.iteration = trainer.iteration();
      entry.epoch = epoch;
      entry.lr = lr;
      entry.loss = trainer.step(batch, lr).loss;
      log << csv_row(entry) << '\n';
      log.flush();
      result.loss_trace.push_back(entry.loss.total);
      if (on_iteration) on_iteration(entry);
    }
    // A budget cut mid-epoch still records the epoch as done so a resumed
    // run never replays a partial epoch with a different order.
    trainer.set_epoch(epoch + 1);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
    result.last_checkpoint = out_dir / "checkpoints" / name;
    trainer.save_checkpoint(result.last_checkpoint);
  }
  result.epochs_completed = trainer.epoch();
  result.iterations = trainer.iteration();
  return result;
}

// ---------------------------------------------------------------------------
// Inference

Tensor predict(AcconetModel& model, const fs::path& image, const TrainConfig& cfg) {
  cv::Mat probe = cv::imread(image.string(), cv::IMREAD_UNCHANGED);
  if (probe.empty()) throw std::runtime_error("cannot read image: " + image.string());
  const int size = cfg.schedule().input_size;
  const Tensor x =
      data::load_image(image, size, data::Normalization::named(cfg.normalization));
  const AcconetModel::Output out = model.forward(x, false);
  const Tensor& s = out.saliency();
  cv::Mat map(size, size, CV_64F);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) map.at<double>(r, c) = s.at(0, 0, r, c);
  if (probe.rows != size || probe.cols != size) {
    cv::resize(map, map, cv::Size(probe.cols, probe.rows), 0, 0, cv::INTER_LINEAR);
  }
  Tensor result(1, 1, map.rows, map.cols);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c)
      result.at(0, 0, r, c) = std::clamp(map.at<double>(r, c), 0.0, 1.0);
  return result;
}

std::vector<fs::path> infer(const TrainConfig& cfg, const fs::path& checkpoint,
                            const fs::path& image_dir, const fs::path& out_dir) {
  cfg.validate();
  const io::TensorArchive ar = load_checked(checkpoint, cfg);
  auto model = build_model(cfg);
  load_model_state(*model, ar);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const fs::path& img : list_images(image_dir)) {
    const Tensor s = predict(*model, img, cfg);
    cv::Mat out(s.h(), s.w(), CV_8U);
    for (int r = 0; r < s.h(); ++r)
      for (int c = 0; c < s.w(); ++c)
        out.at<unsigned char>(r, c) =
            static_cast<unsigned char>(std::lround(255.0 * s.at(0, 0, r, c)));
    const fs::path dst = out_dir / (img.stem().string() + ".png");
    if (!cv::imwrite(dst.string(), out)) throw std::runtime_error("cannot write " + dst.string());
    written.push_back(dst);
  }
  return written;
}

}  // namespace acconet::train
