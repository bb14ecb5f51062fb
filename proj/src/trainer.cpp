#include "netspectra/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "netspectra/io.hpp"

namespace netspectra {

using nlohmann::json;

double lr_at(const LrSchedule& schedule, int epoch) {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  if (const auto* c = std::get_if<ConstantSchedule>(&schedule)) return c->lr;
  if (const auto* g = std::get_if<GeometricSchedule>(&schedule))
    return g->lr0 * std::pow(g->decay, epoch);
  const auto& pw = std::get<PiecewiseSchedule>(schedule);
  if (pw.points.empty()) throw std::invalid_argument("piecewise schedule needs points");
  double lr = pw.points.front().second;
  for (const auto& [from, value] : pw.points)
    if (epoch >= from) lr = value;
  return lr;
}

double effective_lr(double eta, double beta, int batch_size) {
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  return eta / (batch_size * (1.0 - beta));
}

void TrainConfig::validate(int layer_count) const {
  if (lr_at(schedule, 0) < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (record_stride < 0) throw std::invalid_argument("record stride must be >= 0");
  for (int l : trainable_layers)
    if (l < 0 || l >= layer_count) throw std::invalid_argument("trainable layer out of range");
}

MatrixXd Trajectory::weight_matrix() const {
  MatrixXd out(weights.size(), weights.empty() ? 0 : weights.front().size());
  for (std::size_t i = 0; i < weights.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = weights[i];
  return out;
}

MatrixXd Trajectory::velocity_matrix() const {
  MatrixXd out(velocities.size(), velocities.empty() ? 0 : velocities.front().size());
  for (std::size_t i = 0; i < velocities.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = velocities[i];
  return out;
}

TrainResult train(const Network& initial, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const TrainHooks* hooks) {
  config.validate(initial.layout().layer_count());
  netspectra::validate(train_data);
  if (train_data.inputs.cols() != initial.input_dim())
    throw std::invalid_argument("dataset width does not match network input");
  if (train_data.class_count > initial.class_count())
    throw std::invalid_argument("dataset has more classes than the network head");

  TrainResult result{initial, Trajectory{}, {}};
  Network& net = result.net;
  const Eigen::Index n = net.params().size();

  VectorXd velocity = VectorXd::Zero(n);
  VectorXd mask;
  if (!config.trainable_layers.empty()) {
    mask = VectorXd::Zero(n);
    for (int layer : config.trainable_layers) {
      auto [begin, end] = net.layout().layer_span(layer);
      mask.segment(begin, end - begin).setOnes();
    }
  }

  Trajectory& traj = result.trajectory;
  traj.dims = net.layout().dims();
  traj.config = config;
  auto record = [&](std::int64_t step) {
    traj.times.push_back(step);
    traj.weights.push_back(net.params());
    traj.velocities.push_back(velocity);
  };
  record(0);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config.schedule, epoch);
    const auto batches =
        epoch_batches(train_data.size(), config.batch_size, config.seed, epoch);
    for (const auto& batch : batches) {
      Dataset mini = train_data.subset(batch);
      VectorXd grad = gradient(net, mini.inputs, mini.labels, config.weight_decay);
      if (hooks && hooks->grad_extra) hooks->grad_extra(net.params(), grad);
      velocity = -lr * grad + config.momentum * velocity;
      if (mask.size()) velocity = velocity.cwiseProduct(mask);
      if (hooks && hooks->velocity_transform) hooks->velocity_transform(velocity);
      net.params() += velocity;
      ++step;
      if (!velocity.allFinite())
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
      if (config.record_stride >= 1 && step % config.record_stride == 0) record(step);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = batch_loss(net, train_data.inputs, train_data.labels, config.weight_decay);
    m.train_acc = accuracy(net, train_data.inputs, train_data.labels);
    m.test_acc = test_data ? accuracy(net, test_data->inputs, test_data->labels)
                           : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(m.train_loss))
      throw NumericalError("training diverged: non-finite loss after epoch " +
                           std::to_string(epoch));
    result.metrics.push_back(m);
    if (config.record_stride == 0) record(step);
    if (hooks && hooks->on_epoch) hooks->on_epoch(epoch, net);
  }
  return result;
}

namespace {

json schedule_to_json(const LrSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantSchedule>(&schedule))
    return {{"kind", "constant"}, {"lr", c->lr}};
  if (const auto* g = std::get_if<GeometricSchedule>(&schedule))
    return {{"kind", "geometric"}, {"lr0", g->lr0}, {"decay", g->decay}};
  const auto& pw = std::get<PiecewiseSchedule>(schedule);
  json points = json::array();
  for (const auto& [from, lr] : pw.points) points.push_back({from, lr});
  return {{"kind", "piecewise"}, {"points", points}};
}

LrSchedule schedule_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "constant") return ConstantSchedule{j.at("lr").get<double>()};
  if (kind == "geometric")
    return GeometricSchedule{j.at("lr0").get<double>(), j.at("decay").get<double>()};
  if (kind == "piecewise") {
    PiecewiseSchedule pw;
    for (const auto& p : j.at("points"))
      pw.points.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
    return pw;
  }
  throw IoError("unknown schedule kind: " + kind);
}

json config_to_json(const TrainConfig& c) {
  return {{"schedule", schedule_to_json(c.schedule)},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"record_stride", c.record_stride},
          {"trainable_layers", c.trainable_layers}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.schedule = schedule_from_json(j.at("schedule"));
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.record_stride = j.at("record_stride").get<int>();
  c.trainable_layers = j.at("trainable_layers").get<std::vector<int>>();
  return c;
}

json layout_to_json(const ParamLayout& layout) {
  json blocks = json::array();
  for (const ParamBlock& b : layout.blocks())
    blocks.push_back({b.layer, b.kind == ParamKind::Weight ? "weight" : "bias",
                      static_cast<std::int64_t>(b.offset), b.rows, b.cols});
  return blocks;
}

std::pair<json, std::size_t> split_header(const std::string& bytes, const std::string& path,
                                          const std::string& expected_format) {
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string::npos) throw IoError("missing header line in " + path);
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw IoError("corrupt header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != expected_format)
    throw IoError(path + " is not a " + expected_format + " file");
  if (header.value("version", 0) != 1)
    throw IoError("unsupported version in " + path);
  return {header, newline + 1};
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path, std::uint64_t seed,
                     std::int64_t step) {
  json header = {{"format", "netspectra-checkpoint"},
                 {"version", 1},
                 {"dims", net.layout().dims()},
                 {"layout", layout_to_json(net.layout())},
                 {"seed", seed},
                 {"step", step},
                 {"count", static_cast<std::int64_t>(net.params().size())}};
  std::string payload = header.dump();
  payload += '\n';
  append_f64(payload, net.params().data(), static_cast<std::size_t>(net.params().size()));
  atomic_write(path, payload);
}

Network load_checkpoint(const std::string& path, const std::vector<int>* expected_dims) {
  const std::string bytes = read_file(path);
  auto [header, offset] = split_header(bytes, path, "netspectra-checkpoint");
  std::vector<int> dims;
  try {
    dims = header.at("dims").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw IoError("corrupt dims in " + path + ": " + e.what());
  }
  if (expected_dims && dims != *expected_dims)
    throw IoError("checkpoint layout mismatch in " + path);
  ParamLayout layout(dims);
  const auto count = header.at("count").get<std::int64_t>();
  if (count != layout.total()) throw IoError("count does not match layout in " + path);
  if (bytes.size() - offset != std::size_t(count) * sizeof(double))
    throw IoError("corrupt payload length in " + path);
  VectorXd params(count);
  read_f64(bytes, offset, params.data(), static_cast<std::size_t>(count));
  if (header.contains("layout") &&
      header.at("layout") != layout_to_json(layout))
    throw IoError("layout table does not match dims in " + path);
  return Network(std::move(layout), std::move(params));
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  const std::size_t count = traj.times.size();
  const Eigen::Index n = count ? traj.weights.front().size() : 0;
  json header = {{"format", "netspectra-trajectory"},
                 {"version", 1},
                 {"dims", traj.dims},
                 {"times", traj.times},
                 {"config", config_to_json(traj.config)},
                 {"snapshots", count},
                 {"n", static_cast<std::int64_t>(n)}};
  std::string payload = header.dump();
  payload += '\n';
  for (const VectorXd& w : traj.weights) append_f64(payload, w.data(), std::size_t(n));
  for (const VectorXd& v : traj.velocities) append_f64(payload, v.data(), std::size_t(n));
  atomic_write(path, payload);
}

Trajectory load_trajectory(const std::string& path) {
  const std::string bytes = read_file(path);
  auto [header, offset] = split_header(bytes, path, "netspectra-trajectory");
  Trajectory traj;
  traj.dims = header.at("dims").get<std::vector<int>>();
  traj.times = header.at("times").get<std::vector<std::int64_t>>();
  traj.config = config_from_json(header.at("config"));
  const auto count = header.at("snapshots").get<std::size_t>();
  const auto n = header.at("n").get<std::int64_t>();
  if (traj.times.size() != count) throw IoError("times/snapshot mismatch in " + path);
  if (bytes.size() - offset != 2 * count * std::size_t(n) * sizeof(double))
    throw IoError("corrupt payload length in " + path);
  traj.weights.resize(count, VectorXd(n));
  traj.velocities.resize(count, VectorXd(n));
  std::size_t pos = offset;
  for (std::size_t i = 0; i < count; ++i, pos += std::size_t(n) * sizeof(double))
    read_f64(bytes, pos, traj.weights[i].data(), std::size_t(n));
  for (std::size_t i = 0; i < count; ++i, pos += std::size_t(n) * sizeof(double))
    read_f64(bytes, pos, traj.velocities[i].data(), std::size_t(n));
  return traj;
}

void save_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path) {
  CsvWriter csv(path);
  csv.header({"epoch", "lr", "train_loss", "train_acc", "test_acc"});
  for (const EpochMetrics& m : metrics)
    csv.row({double(m.epoch), m.lr, m.train_loss, m.train_acc, m.test_acc});
  csv.flush();
}

}  // namespace netspectra
