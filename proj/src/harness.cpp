#include "lvf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lvf/parallel.hpp"
#include "lvf/rng.hpp"

namespace lvf {

namespace {

namespace fs = std::filesystem;

// Per-stage seed streams derived from the master seed.
constexpr uint64_t kCollectStream = 0xC0;
constexpr uint64_t kSplitStream = 0x52;
constexpr uint64_t kEvalStream = 0xE7;
constexpr uint64_t kRolloutStream = 0x60;
constexpr uint64_t kTransportStream = 0x7A;

constexpr char kDatasetMagic[4] = {'S', 'L', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error(std::string(what) + ": file truncated");
  uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(b[k]) << (8 * k);
  return v;
}

double get_f64(std::istream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw std::runtime_error(std::string(what) + ": file truncated");
  uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(b[k]) << (8 * k);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::string bucket_path(const RunConfig& cfg, size_t k) {
  return join_path(cfg.out_dir, "bucket_" + std::to_string(k) + ".slds");
}

Image normalized(const Eigen::MatrixXd& raw) {
  const double lo = raw.minCoeff(), hi = raw.maxCoeff();
  if (hi <= lo) return Image::from_grid(Eigen::MatrixXd::Zero(raw.rows(), raw.cols()));
  return Image::from_grid(((raw.array() - lo) / (hi - lo)).matrix());
}

double mean_column_norm(const Eigen::MatrixXd& residual, const std::vector<int>& idx) {
  double acc = 0.0;
  for (int c : idx) acc += residual.col(c).norm();
  return idx.empty() ? 0.0 : acc / static_cast<double>(idx.size());
}

TargetSet load_target(const RunConfig& cfg, const std::string& spec) {
  if (spec == "square") return TargetSet::centered_square(cfg.n);
  return TargetSet::from_pgm(spec);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  if (key == "n") n = as_int();
  else if (key == "pieces") pieces = as_int();
  else if (key == "samples_per_length") samples_per_length = as_int();
  else if (key == "test_fraction") test_fraction = as_double();
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "out") out_dir = value;
  else if (key == "grid_positions") grid.positions = as_int();
  else if (key == "grid_angles") grid.angles = as_int();
  else if (key == "runs") runs = as_int();
  else if (key == "max_steps") max_steps = as_int();
  else if (key == "v_stop") v_stop = as_double();
  else if (key == "p") lyap_p = as_double();
  else if (key == "particle_threshold") particle_threshold = as_double();
  else if (key == "piece_radius") sim.piece_radius = as_double();
  else if (key == "verts_per_piece") sim.verts_per_piece = as_int();
  else if (key == "substeps_per_unit_length") sim.substeps_per_unit_length = as_int();
  else if (key == "settle_iterations") sim.settle_iterations = as_int();
  else if (key == "overlap_tol") sim.overlap_tol = as_double();
  else if (key == "supersample") sim.supersample = as_int();
  else if (key == "pusher_width") sim.pusher_width = as_double();
  else if (key == "ridge") solver.ridge = as_double();
  else if (key == "kkt_tol") solver.kkt_tol = as_double();
  else if (key == "max_iters") solver.max_iters = as_int();
  else if (key == "lengths") {
    lengths.clear();
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) lengths.push_back(std::stod(tok));
  } else if (key == "spawn_region") {
    double x0, y0, x1, y1;
    if (std::sscanf(value.c_str(), "%lf,%lf,%lf,%lf", &x0, &y0, &x1, &y1) != 4)
      throw std::invalid_argument("spawn_region wants x0,y0,x1,y1");
    spawn_region = {{x0, y0}, {x1, y1}};
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      const auto sb = s.find_first_not_of(" \t");
      const auto se = s.find_last_not_of(" \t");
      return sb == std::string::npos ? std::string() : s.substr(sb, se - sb + 1);
    };
    cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  cfg.check();
  return cfg;
}

void RunConfig::check() const {
  if (n < 2) throw std::invalid_argument("config: n must be >= 2");
  if (samples_per_length < 10)
    throw std::invalid_argument("config: samples_per_length must be >= 10");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("config: test_fraction must lie in (0,1)");
  if (lengths.empty()) throw std::invalid_argument("config: lengths must be non-empty");
  for (size_t k = 1; k < lengths.size(); ++k)
    if (lengths[k] <= lengths[k - 1])
      throw std::invalid_argument("config: lengths must be strictly increasing");
  if (pieces < 0) throw std::invalid_argument("config: pieces must be >= 0");
}

ActionGrid RunConfig::action_grid(const std::vector<double>& grid_lengths) const {
  ActionGrid g;
  g.positions = grid.positions;
  g.angles = grid.angles;
  g.lengths = grid_lengths;
  g.pusher_width = sim.pusher_width;
  return g;
}

void write_dataset(const PairedDataset& data, int n, double length,
                   const std::string& path) {
  if (data.pre.rows() != static_cast<Eigen::Index>(n) * n ||
      data.pre.cols() != data.post.cols() || data.pre.rows() != data.post.rows())
    throw std::invalid_argument("write_dataset: shape mismatch");
  auto out = open_out(path, std::ios::binary);
  out.write(kDatasetMagic, 4);
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<uint32_t>(n));
  put_f64(out, length);
  put_u32(out, static_cast<uint32_t>(data.pre.cols()));
  for (Eigen::Index c = 0; c < data.pre.cols(); ++c) {
    for (Eigen::Index r = 0; r < data.pre.rows(); ++r) put_f64(out, data.pre(r, c));
    for (Eigen::Index r = 0; r < data.post.rows(); ++r) put_f64(out, data.post(r, c));
  }
  if (!out) throw std::runtime_error("write_dataset: write failed for " + path);
}

DatasetFile read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw std::runtime_error("read_dataset: bad magic in " + path);
  if (get_u32(in, "read_dataset") != kDatasetVersion)
    throw std::runtime_error("read_dataset: unsupported version in " + path);
  DatasetFile file;
  file.n = static_cast<int>(get_u32(in, "read_dataset"));
  file.length = get_f64(in, "read_dataset");
  const uint32_t pairs = get_u32(in, "read_dataset");
  const Eigen::Index n2 = static_cast<Eigen::Index>(file.n) * file.n;
  file.data.pre.resize(n2, pairs);
  file.data.post.resize(n2, pairs);
  for (uint32_t c = 0; c < pairs; ++c) {
    for (Eigen::Index r = 0; r < n2; ++r) file.data.pre(r, c) = get_f64(in, "read_dataset");
    for (Eigen::Index r = 0; r < n2; ++r) file.data.post(r, c) = get_f64(in, "read_dataset");
  }
  return file;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Transition sample_transition(const RunConfig& cfg, double length, uint64_t seed) {
  Rng rng(seed);
  const Scene scene = spawn_scene(cfg.sim, cfg.pieces, cfg.spawn_region, rng.next_u64());
  const Image pre = rasterize(scene, cfg.n, cfg.sim.supersample);

  std::vector<Vec2> occupied;
  for (int i = 0; i < cfg.n; ++i)
    for (int j = 0; j < cfg.n; ++j)
      if (pre(i, j) > 0.0) occupied.push_back(pixel_center(i, j, cfg.n));
  if (occupied.empty())
    throw std::runtime_error("sample_transition: scene rasterized to nothing");

  Action a;
  a.length = length;
  bool found = false;
  for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
    a.px = rng.uniform();
    a.py = rng.uniform();
    a.theta = rng.uniform(0.0, 2.0 * M_PI);
    const PushRectangle rect = push_rectangle(a, cfg.sim.pusher_width);
    bool inside = true;
    for (const Vec2& c : rect.corners)
      inside &= c.x() >= 0.0 && c.x() <= 1.0 && c.y() >= 0.0 && c.y() <= 1.0;
    if (!inside) continue;
    for (const Vec2& q : occupied)
      if (rectangle_contains(rect, q)) {
        found = true;
        break;
      }
  }
  if (!found)
    throw std::runtime_error("sample_transition: no contacting push found in 1000 tries");

  Transition t;
  t.action = a;
  t.pre = pre;
  t.post = rasterize(apply_push(scene, a, cfg.sim), cfg.n, cfg.sim.supersample);
  return t;
}

CollectResult cmd_collect(const RunConfig& cfg) {
  cfg.check();
  fs::create_directories(cfg.out_dir);
  const uint64_t stage = derive_seed(cfg.seed, kCollectStream);
  const Eigen::Index n2 = static_cast<Eigen::Index>(cfg.n) * cfg.n;

  CollectResult result;
  for (size_t k = 0; k < cfg.lengths.size(); ++k) {
    const uint64_t bucket_seed = derive_seed(stage, k);
    PairedDataset data;
    data.length_bucket = static_cast<int>(k);
    data.pre.resize(n2, cfg.samples_per_length);
    data.post.resize(n2, cfg.samples_per_length);
    parallel_for(0, cfg.samples_per_length, [&](int s) {
      const Transition t = sample_transition(cfg, cfg.lengths[k],
                                             derive_seed(bucket_seed, static_cast<uint64_t>(s)));
      const AffineMap tf = canonical_transform(t.action);
      data.pre.col(s) = vectorize(warp_image(t.pre, tf));
      data.post.col(s) = vectorize(warp_image(t.post, tf));
    });
    const std::string path = bucket_path(cfg, k);
    write_dataset(data, cfg.n, cfg.lengths[k], path);
    result.paths.push_back(path);
    result.datasets.push_back(std::move(data));
  }
  return result;
}

TrainResult cmd_train(const RunConfig& cfg, const std::vector<FitMode>& modes) {
  cfg.check();
  if (modes.empty()) throw std::invalid_argument("cmd_train: no fit modes given");
  const uint64_t stage = derive_seed(cfg.seed, kSplitStream);

  // Load buckets and carve out the seeded train/test split once.
  std::vector<PairedDataset> train, full;
  std::vector<std::vector<int>> test_idx, train_idx;
  for (size_t k = 0; k < cfg.lengths.size(); ++k) {
    DatasetFile file = read_dataset(bucket_path(cfg, k));
    if (file.n != cfg.n)
      throw std::runtime_error("cmd_train: dataset resolution differs from config");
    const int m = static_cast<int>(file.data.pre.cols());
    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(stage, k));
    for (int i = m - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    int n_test = static_cast<int>(std::llround(cfg.test_fraction * m));
    n_test = std::clamp(n_test, 1, m - 1);

    std::vector<int> te(order.begin(), order.begin() + n_test);
    std::vector<int> tr(order.begin() + n_test, order.end());
    std::sort(te.begin(), te.end());
    std::sort(tr.begin(), tr.end());

    PairedDataset dtr;
    dtr.length_bucket = static_cast<int>(k);
    dtr.pre.resize(file.data.pre.rows(), tr.size());
    dtr.post.resize(file.data.post.rows(), tr.size());
    for (size_t c = 0; c < tr.size(); ++c) {
      dtr.pre.col(static_cast<Eigen::Index>(c)) = file.data.pre.col(tr[c]);
      dtr.post.col(static_cast<Eigen::Index>(c)) = file.data.post.col(tr[c]);
    }
    train.push_back(std::move(dtr));
    full.push_back(std::move(file.data));
    test_idx.push_back(std::move(te));
    train_idx.push_back(std::move(tr));
  }

  TrainResult result;
  for (FitMode mode : modes) {
    SwitchedLinearModel model = train_switched_linear(train, cfg.lengths, cfg.n, mode,
                                                      cfg.solver, cfg.sim.pusher_width);
    const std::string model_path =
        join_path(cfg.out_dir, "model_" + to_string(mode) + ".slvf");
    save_model(model, model_path);
    result.model_paths.push_back(model_path);
    for (size_t k = 0; k < cfg.lengths.size(); ++k) {
      const Eigen::MatrixXd residual = full[k].post - model.matrices[k].a * full[k].pre;
      TrainRow row;
      row.mode = to_string(mode);
      row.bucket = static_cast<int>(k);
      row.length = cfg.lengths[k];
      row.train_err = mean_column_norm(residual, train_idx[k]);
      row.test_err = mean_column_norm(residual, test_idx[k]);
      result.rows.push_back(row);
    }
  }

  result.csv_path = join_path(cfg.out_dir, "lsq_comparison.csv");
  auto csv = open_out(result.csv_path);
  csv << "mode,bucket,length,train_err,test_err\n";
  for (const TrainRow& r : result.rows)
    csv << r.mode << "," << r.bucket << "," << format_double(r.length) << ","
        << format_double(r.train_err) << "," << format_double(r.test_err) << "\n";
  return result;
}

EvalResult cmd_eval(const RunConfig& cfg, const std::string& model_path, int n_test) {
  cfg.check();
  if (n_test < 1) throw std::invalid_argument("cmd_eval: n_test must be >= 1");
  fs::create_directories(cfg.out_dir);
  const SwitchedLinearModel model = load_model(model_path);
  if (model.n != cfg.n)
    throw std::runtime_error("cmd_eval: model resolution differs from config");
  const TransportModel transport =
      transport_from_width(cfg.sim.pusher_width, derive_seed(cfg.seed, kTransportStream));
  const uint64_t stage = derive_seed(cfg.seed, kEvalStream);
  const int k = static_cast<int>(model.lengths.size());

  Eigen::MatrixXd errs(n_test, 3);  // columns: linear, transport, identity
  parallel_for(0, n_test, [&](int s) {
    const double length = model.lengths[static_cast<size_t>(s % k)];
    const Transition t = sample_transition(cfg, length, derive_seed(stage, static_cast<uint64_t>(s)));

    const Image linear_pred = predict_linear(model, t.pre, t.action);
    errs(s, 0) = frobenius_distance(t.post, linear_pred);

    const ParticleSet parts = particles_from_image(t.pre, cfg.particle_threshold);
    Image transport_pred(cfg.n);
    if (!parts.points.empty()) {
      const ParticleSet moved = transport_predict(
          transport, parts, t.action, derive_seed(transport.rng_seed_base, static_cast<uint64_t>(s)));
      transport_pred = particles_to_image(moved, cfg.n);
    }
    errs(s, 1) = frobenius_distance(t.post, transport_pred);
    errs(s, 2) = frobenius_distance(t.post, t.pre);
  });

  EvalResult result;
  const char* names[3] = {"linear", "transport", "identity"};
  for (int c = 0; c < 3; ++c)
    result.rows.push_back({names[c], n_test, errs.col(c).sum() / n_test});

  result.csv_path = join_path(cfg.out_dir, "eval.csv");
  auto csv = open_out(result.csv_path);
  csv << "model,n_test,mean_err\n";
  for (const EvalRow& r : result.rows)
    csv << r.model << "," << r.n_test << "," << format_double(r.mean_err) << "\n";
  return result;
}

RolloutResult cmd_rollout(const RunConfig& cfg, const std::string& predictor_name,
                          const std::string& model_path, const std::string& target_spec,
                          bool write_frames) {
  cfg.check();
  fs::create_directories(cfg.out_dir);
  const TargetSet target = load_target(cfg, target_spec);
  if (target.n() != cfg.n)
    throw std::runtime_error("cmd_rollout: target resolution differs from config");
  const DistanceField field = build_distance_field(target, cfg.lyap_p);

  std::unique_ptr<Predictor> pred;
  std::vector<double> grid_lengths = cfg.lengths;
  if (predictor_name == "linear") {
    SwitchedLinearModel model = load_model(model_path);
    if (model.n != cfg.n)
      throw std::runtime_error("cmd_rollout: model resolution differs from config");
    grid_lengths = model.lengths;
    pred = std::make_unique<LinearPredictor>(std::move(model));
  } else if (predictor_name == "transport") {
    pred = std::make_unique<TransportPredictor>(
        transport_from_width(cfg.sim.pusher_width, derive_seed(cfg.seed, kTransportStream)),
        cfg.n, cfg.particle_threshold);
  } else if (predictor_name == "oracle") {
    pred = std::make_unique<OraclePredictor>(cfg.sim, cfg.n);
  } else if (predictor_name == "identity") {
    pred = std::make_unique<IdentityPredictor>();
  } else {
    throw std::invalid_argument("cmd_rollout: unknown predictor: " + predictor_name);
  }

  const ActionGrid grid = cfg.action_grid(grid_lengths);
  const uint64_t stage = derive_seed(cfg.seed, kRolloutStream);

  RolloutResult result;
  result.csv_path = join_path(cfg.out_dir, "descent_" + predictor_name + ".csv");
  auto csv = open_out(result.csv_path);
  csv << "run,step,v_pred,v_real,status\n";
  for (int r = 0; r < cfg.runs; ++r) {
    const Scene scene =
        spawn_scene(cfg.sim, cfg.pieces, cfg.spawn_region, derive_seed(stage, static_cast<uint64_t>(r)));
    RolloutLog log = rollout(scene, cfg.sim, *pred, field, grid, cfg.max_steps,
                             cfg.v_stop, write_frames);
    const std::string status = to_string(log.status);
    csv << r << ",0," << format_double(log.initial_v) << ","
        << format_double(log.initial_v) << "," << status << "\n";
    for (const RolloutStep& s : log.steps)
      csv << r << "," << s.step << "," << format_double(s.predicted_v) << ","
          << format_double(s.realized_v) << "," << status << "\n";
    if (write_frames)
      for (size_t fi = 0; fi < log.frames.size(); ++fi)
        write_pgm(log.frames[fi],
                  join_path(cfg.out_dir, "run" + std::to_string(r) + "_step" +
                                             std::to_string(fi + 1) + ".pgm"));
    RolloutRunSummary summary;
    summary.run = r;
    summary.steps = static_cast<int>(log.steps.size());
    summary.status = log.status;
    summary.final_v = log.steps.empty() ? log.initial_v : log.steps.back().realized_v;
    result.runs.push_back(summary);
    result.logs.push_back(std::move(log));
  }
  return result;
}

void cmd_kernels(const RunConfig& cfg, const std::string& model_path,
                 const std::vector<std::pair<int, int>>& pixels) {
  fs::create_directories(cfg.out_dir);
  const SwitchedLinearModel model = load_model(model_path);
  if (pixels.empty()) throw std::invalid_argument("cmd_kernels: empty pixel list");
  auto csv = open_out(join_path(cfg.out_dir, "kernels.csv"));
  csv << "length_index,pixel_i,pixel_j,row,col,value\n";
  for (size_t k = 0; k < model.lengths.size(); ++k)
    for (const auto& [pi, pj] : pixels) {
      const Eigen::MatrixXd kernel = extract_kernel(model, static_cast<int>(k), pi, pj);
      write_pgm(normalized(kernel),
                join_path(cfg.out_dir, "kernel_L" + std::to_string(k) + "_i" +
                                           std::to_string(pi) + "_j" + std::to_string(pj) +
                                           ".pgm"));
      for (int r = 0; r < kernel.rows(); ++r)
        for (int c = 0; c < kernel.cols(); ++c)
          csv << k << "," << pi << "," << pj << "," << r << "," << c << ","
              << format_double(kernel(r, c)) << "\n";
    }
}

void cmd_step_response(const RunConfig& cfg, const std::string& model_path) {
  fs::create_directories(cfg.out_dir);
  const SwitchedLinearModel model = load_model(model_path);
  auto csv = open_out(join_path(cfg.out_dir, "step_response.csv"));
  csv << "length_index,row,col,value\n";
  for (size_t k = 0; k < model.lengths.size(); ++k) {
    const Eigen::MatrixXd resp = step_response(model, static_cast<int>(k));
    write_pgm(normalized(resp),
              join_path(cfg.out_dir, "step_response_L" + std::to_string(k) + ".pgm"));
    for (int r = 0; r < resp.rows(); ++r)
      for (int c = 0; c < resp.cols(); ++c)
        csv << k << "," << r << "," << c << "," << format_double(resp(r, c)) << "\n";
  }
}

}  // namespace lvf
