// lyapnet: dataset generation, ensemble training, parameter sweeps and error
// tables for the Lorenz and coupled-Lorenz systems.

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <lyapnet/lyapnet.hpp>

namespace fs = std::filesystem;
using namespace lyapnet;
using lyapnet::detail::concat;
using lyapnet::detail::fmt_double;

namespace {

constexpr const char* kRootEnv = "LYAPNET_OUT";

fs::path default_root() {
  const char* e = std::getenv(kRootEnv);
  return e && *e ? fs::path(e) : fs::path("lyapnet-out");
}

/// Exclusive `<target>.lock` file, removed when the command ends.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& target) : path_(target.string() + ".lock") {
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw Error(concat(target.string(), " is in use by another lyapnet run (delete ", path_.string(),
                         " if that run is gone)"));
    }
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

/// Directory output built under `<dir>.partial` and moved into place by commit().
class StagedDir {
 public:
  explicit StagedDir(fs::path dir) : final_(std::move(dir)), tmp_(final_.string() + ".partial") {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_, tmp_;
  bool committed_ = false;
};

void need_file(const fs::path& p, std::string_view what, std::string_view producer) {
  if (!fs::exists(p)) {
    throw Error(concat("no ", what, " at ", p.string(), " (create it with `lyapnet ", producer, "`)"));
  }
}

std::string join(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Global {
  unsigned jobs = 0;
  fs::path root = default_root();
  bool quiet = false;
};

// ---------------------------------------------------------------------------
// Grid flags shared by the sweep commands.

struct GridFlags {
  int line = 0;
  std::string plane;
  double r_lo = 0.0, r_hi = 300.0;
  double b = 2.2;
  double b_lo = 2.0, b_hi = 3.0;
  double sigma = 10.0;

  void attach(CLI::App* cmd) {
    auto* l = cmd->add_option("--line", line, "r-line with N points at fixed --b");
    auto* p = cmd->add_option("--plane", plane, "(r, b) plane with RxB points, e.g. 50x50");
    l->excludes(p);
    cmd->add_option("--r-lo", r_lo, "lower r")->capture_default_str();
    cmd->add_option("--r-hi", r_hi, "upper r")->capture_default_str();
    cmd->add_option("--b", b, "b for --line")->capture_default_str();
    cmd->add_option("--b-lo", b_lo, "lower b for --plane")->capture_default_str();
    cmd->add_option("--b-hi", b_hi, "upper b for --plane")->capture_default_str();
    cmd->add_option("--sigma", sigma, "sigma")->capture_default_str();
  }

  GridSpec build() const {
    if (line > 0) return GridSpec::line(r_lo, r_hi, line, b, sigma);
    if (plane.empty()) throw Error("pass --line N or --plane RxB");
    const auto x = plane.find('x');
    if (x == std::string::npos) throw Error(concat("--plane expects RxB, got '", plane, "'"));
    const int nr = std::stoi(plane.substr(0, x)), nb = std::stoi(plane.substr(x + 1));
    return GridSpec::plane(r_lo, r_hi, nr, b_lo, b_hi, nb, sigma);
  }

  std::string tag() const {
    if (line > 0) return concat("line", line, "-b", b);
    return "plane" + plane;
  }
};

// ---------------------------------------------------------------------------
// gen-data

struct GenData {
  std::string system = "lorenz";
  std::string regime = "random";
  std::string profile = "desk";
  std::uint64_t seed = 0;
  fs::path out;
  int n_train = 8000, n_val = 2000, n_test = 2000;
  int per_line = 6000, pool = 24000;
  double transient = -1.0, measure = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--system", system, "lorenz | coupled")->capture_default_str();
    cmd->add_option("--regime", regime, "nonrandom (four r-lines) | random (uniform r, b)")->capture_default_str();
    cmd->add_option("--profile", profile, "LE integration lengths: paper | desk")->capture_default_str();
    cmd->add_option("--seed", seed, "dataset seed")->capture_default_str();
    cmd->add_option("--out", out, "output directory (default $LYAPNET_OUT/data/<system>-<regime>-<profile>)");
    cmd->add_option("--n-train", n_train)->capture_default_str();
    cmd->add_option("--n-val", n_val)->capture_default_str();
    cmd->add_option("--n-test", n_test)->capture_default_str();
    cmd->add_option("--per-line", per_line, "points per r-line (nonrandom)")->capture_default_str();
    cmd->add_option("--pool", pool, "(r, b) draws before deduplication (random)")->capture_default_str();
    cmd->add_option("--transient", transient, "override transient time (makes the profile custom)");
    cmd->add_option("--measure", measure, "override measurement time (makes the profile custom)");
  }

  int run(const Global& g) {
    const SystemKind kind = parse_system(system);
    BuildConfig cfg;
    cfg.profile = parse_profile(profile);
    cfg.le = profile_config(cfg.profile);
    if (transient >= 0.0 || measure > 0.0) {
      cfg.profile = Profile::Custom;
      if (transient >= 0.0) cfg.le.transient_time = transient;
      if (measure > 0.0) cfg.le.measure_time = measure;
    }
    cfg.n_train = n_train;
    cfg.n_val = n_val;
    cfg.n_test = n_test;
    cfg.per_line = per_line;
    cfg.random_pool = pool;
    cfg.jobs = g.jobs;
    cfg.verbose = !g.quiet;
    if (out.empty()) out = g.root / "data" / concat(system, "-", regime, "-", profile);

    OutputLock lock(out);
    StagedDir stage(out);
    const auto t0 = std::chrono::steady_clock::now();
    DatasetSplits splits;
    if (regime == "random") {
      splits = build_random_dataset(kind, seed, cfg);
    } else if (regime == "nonrandom") {
      splits = build_nonrandom_dataset(kind, seed, cfg);
    } else {
      throw Error(concat("unknown regime '", regime, "' (nonrandom or random)"));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    KeyValues kv{{"regime", regime},
                 {"transient_time", fmt_double(cfg.le.transient_time)},
                 {"transient_step", fmt_double(cfg.le.transient_step)},
                 {"measure_time", fmt_double(cfg.le.measure_time)},
                 {"measure_step", fmt_double(cfg.le.measure_step)},
                 {"renorm_interval_steps", std::to_string(cfg.le.renorm_interval_steps)},
                 {"per_line", std::to_string(per_line)},
                 {"pool", std::to_string(pool)},
                 {"dedup_tol", fmt_double(cfg.dedup_tol)},
                 {"generation_seconds", fmt_double(secs)}};
    save_splits(stage.path(), splits, kv);
    stage.commit();
    std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
              << " samples to " << out.string() << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// train

void write_history(std::ostream& os, const std::vector<TrainReport>& reports, const std::vector<std::uint64_t>& seeds) {
  os << "model,seed,epoch,train_loss,val_loss\n";
  for (std::size_t m = 0; m < reports.size(); ++m) {
    for (std::size_t e = 0; e < reports[m].history.size(); ++e) {
      os << m << ',' << seeds[m] << ',' << e << ',' << fmt_double(reports[m].history[e].train) << ','
         << fmt_double(reports[m].history[e].val) << "\n";
    }
  }
}

std::string model_file(std::size_t i) {
  std::ostringstream os;
  os << "model_" << std::setw(2) << std::setfill('0') << i << ".lynn";
  return os.str();
}

std::vector<ModelParams> load_ensemble(const fs::path& dir) {
  need_file(dir / "manifest.txt", "model ensemble", "train");
  const auto kv = load_key_values(dir / "manifest.txt");
  const int n = std::stoi(kv.at("n_models"));
  const int outputs = system_dim(parse_system(kv.at("system")));
  std::vector<ModelParams> models;
  for (int i = 0; i < n; ++i) models.push_back(load_model(dir / model_file(static_cast<std::size_t>(i)), outputs));
  return models;
}

struct Train {
  fs::path data;
  fs::path out;
  int n_models = 10;
  std::uint64_t seed = 1;
  TrainConfig cfg;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data, "dataset directory from gen-data")->required();
    cmd->add_option("--out", out, "output directory (default $LYAPNET_OUT/models/<dataset name>)");
    cmd->add_option("--models", n_models, "ensemble size")->capture_default_str();
    cmd->add_option("--seed", seed, "model i uses seed + i")->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
    cmd->add_option("--lr", cfg.lr)->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    cmd->add_option("--delta", cfg.delta, "Huber threshold")->capture_default_str();
    cmd->add_option("--batch", cfg.batch_train, "training batch size")->capture_default_str();
    cmd->add_option("--batch-eval", cfg.batch_eval, "evaluation batch size")->capture_default_str();
  }

  int run(const Global& g) {
    need_file(data / split_files::manifest, "dataset", "gen-data");
    const auto splits = load_splits(data);
    const auto data_kv = load_key_values(data / split_files::manifest);
    if (n_models < 1) throw Error("--models must be >= 1");
    cfg.validate();
    if (out.empty()) out = g.root / "models" / fs::absolute(data).lexically_normal().filename();

    OutputLock lock(out);
    StagedDir stage(out);
    const Architecture arch = Architecture::for_system(splits.system);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_models; ++i) seeds.push_back(seed + static_cast<std::uint64_t>(i));
    std::vector<TrainReport> reports(seeds.size());
    std::mutex log_mutex;
    parallel_for(seeds.size(), g.jobs, [&](std::size_t m) {
      TrainConfig c = cfg;
      c.seed = seeds[m];
      reports[m] = train(arch, splits.train, splits.val, c, [&](int epoch, const EpochLoss& l) {
        if (g.quiet || (epoch + 1) % 25 != 0) return;
        std::lock_guard lk(log_mutex);
        std::cerr << "model " << m << " epoch " << epoch + 1 << "/" << c.epochs << " train " << l.train << " val "
                  << l.val << "\n";
      });
    });

    std::vector<double> test_loss, val_best;
    std::string best_epochs;
    for (std::size_t m = 0; m < reports.size(); ++m) {
      save_model(stage.path() / model_file(m), reports[m].best_params);
      test_loss.push_back(evaluate_loss(reports[m].best_params, splits.test, cfg.delta, cfg.batch_eval));
      val_best.push_back(reports[m].history[static_cast<std::size_t>(reports[m].best_epoch)].val);
      best_epochs += (m ? "," : "") + std::to_string(reports[m].best_epoch);
    }
    binio::atomic_write(stage.path() / "history.csv", [&](std::ostream& os) { write_history(os, reports, seeds); },
                        std::ios::out);
    const auto t = mean_std(test_loss), v = mean_std(val_best);
    std::string per_model;
    for (std::size_t m = 0; m < test_loss.size(); ++m) per_model += (m ? "," : "") + fmt_double(test_loss[m]);
    KeyValues kv{{"system", std::string(to_string(splits.system))},
                 {"data", fs::absolute(data).lexically_normal().string()},
                 {"data_seed", data_kv.at("seed")},
                 {"n_models", std::to_string(n_models)},
                 {"model_seeds", join(seeds)},
                 {"epochs", std::to_string(cfg.epochs)},
                 {"lr", fmt_double(cfg.lr)},
                 {"weight_decay", fmt_double(cfg.weight_decay)},
                 {"delta", fmt_double(cfg.delta)},
                 {"batch_train", std::to_string(cfg.batch_train)},
                 {"batch_eval", std::to_string(cfg.batch_eval)},
                 {"best_epochs", best_epochs},
                 {"test_huber", per_model},
                 {"test_huber_mean", fmt_double(t.mean)},
                 {"test_huber_std", fmt_double(t.std)},
                 {"val_huber_mean", fmt_double(v.mean)},
                 {"val_huber_std", fmt_double(v.std)}};
    save_key_values(stage.path() / "manifest.txt", kv, "lyapnet ensemble manifest");
    stage.commit();
    std::cout << "trained " << n_models << " models -> " << out.string() << "\n"
              << "test Huber " << t.mean << " +- " << t.std << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// sweeps

struct ClassicalSweep {
  std::string system = "lorenz";
  std::string profile = "desk";
  GridFlags grid;
  fs::path out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--system", system, "lorenz | coupled")->capture_default_str();
    cmd->add_option("--profile", profile, "LE integration lengths: desk | paper")->capture_default_str();
    grid.attach(cmd);
    cmd->add_option("--out", out, "CSV path (default $LYAPNET_OUT/sweeps/classical-<system>-<grid>.csv)");
  }

  int run(const Global& g) {
    const auto kind = parse_system(system);
    const auto spec = grid.build();
    if (out.empty()) out = g.root / "sweeps" / concat("classical-", system, "-", grid.tag(), ".csv");
    OutputLock lock(out);
    SweepOptions opt;
    opt.classical = profile_config(parse_profile(profile));
    opt.jobs = g.jobs;
    opt.verbose = !g.quiet;
    const auto res = classical_sweep(spec, kind, opt);
    save_sweep_csv(out, res);
    std::size_t failed = 0;
    for (const auto& r : res.rows) failed += !r.ok;
    std::cout << "wrote " << res.rows.size() << " rows (" << failed << " failed) to " << out.string() << "\n";
    return 0;
  }
};

struct PredictSweep {
  fs::path models;
  GridFlags grid;
  bool classical = false;
  std::string profile = "desk";
  fs::path truth;
  std::uint64_t fill_seed = 0;
  fs::path out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--models", models, "ensemble directory from train")->required();
    grid.attach(cmd);
    auto* c = cmd->add_flag("--classical", classical, "also compute the classical spectrum at every point");
    cmd->add_option("--profile", profile, "LE lengths for --classical")->capture_default_str();
    cmd->add_option("--truth", truth, "merge classical truth from a classical-sweep CSV of the same grid")->excludes(c);
    cmd->add_option("--fill-seed", fill_seed, "seed for constant-series fill values")->capture_default_str();
    cmd->add_option("--out", out, "CSV path (default $LYAPNET_OUT/sweeps/predict-<system>-<grid>.csv)");
  }

  int run(const Global& g) {
    const auto ensemble = load_ensemble(models);
    const auto kv = load_key_values(models / "manifest.txt");
    const auto kind = parse_system(kv.at("system"));
    const auto spec = grid.build();
    if (!truth.empty()) need_file(truth, "classical sweep", "classical-sweep");
    if (out.empty()) out = g.root / "sweeps" / concat("predict-", to_string(kind), "-", grid.tag(), ".csv");
    OutputLock lock(out);
    SweepOptions opt;
    opt.with_classical = classical;
    opt.classical = profile_config(parse_profile(profile));
    opt.jobs = g.jobs;
    opt.fill_seed = fill_seed;
    opt.delta = std::stod(kv.at("delta"));
    opt.verbose = !g.quiet;
    auto res = spec.kind == GridKind::Line ? sweep_line(ensemble, spec, kind, opt) : sweep_plane(ensemble, spec, kind, opt);
    if (!truth.empty()) {
      auto t = load_sweep_csv(truth);
      res = attach_truth(std::move(res), t);
      std::vector<double> per_model;
      for (std::size_t m = 0; m < ensemble.size(); ++m) {
        double sum = 0;
        std::size_t n = 0;
        for (const auto& row : res.rows) {
          if (!row.ok) continue;
          for (int k = 0; k < res.n_les; ++k, ++n) {
            sum += huber_term(row.members[m][static_cast<std::size_t>(k)] - (*row.truth)[static_cast<std::size_t>(k)],
                              opt.delta);
          }
        }
        if (n) per_model.push_back(sum / static_cast<double>(n));
      }
      if (!per_model.empty()) res.huber = mean_std(per_model);
    }
    save_sweep_csv(out, res);
    std::size_t failed = 0;
    for (const auto& r : res.rows) failed += !r.ok;
    std::cout << "wrote " << res.rows.size() << " rows (" << failed << " failed) to " << out.string() << "\n";
    if (res.huber) std::cout << "Huber vs classical " << res.huber->mean << " +- " << res.huber->std << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// error-analysis

struct ErrorAnalysis {
  fs::path sweep;
  fs::path truth;
  std::vector<double> edges;
  fs::path out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--sweep", sweep, "CSV from predict-sweep")->required();
    cmd->add_option("--truth", truth, "classical-sweep CSV, if the prediction CSV has no truth columns");
    cmd->add_option("--edges", edges, "truth-bin edges (default -inf -0.4 -0.05 0.05 0.5 inf)")->delimiter(',');
    cmd->add_option("--out", out, "histogram CSV (default <sweep>.hist.csv)");
  }

  int run(const Global&) {
    need_file(sweep, "prediction sweep", "predict-sweep");
    auto res = load_sweep_csv(sweep);
    if (!truth.empty()) {
      need_file(truth, "classical sweep", "classical-sweep");
      res = attach_truth(std::move(res), load_sweep_csv(truth));
    }
    if (!res.has_truth) {
      throw Error(concat(sweep.string(), " has no classical truth; pass --truth (from `lyapnet classical-sweep`) or "
                         "rerun predict-sweep with --classical"));
    }
    if (out.empty()) out = fs::path(sweep.string() + ".hist.csv");
    OutputLock lock(out);
    const auto h = edges.empty() ? error_histogram(res) : error_histogram(res, edges);
    save_histogram_csv(out, h);
    write_histogram_csv(std::cout, h);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// report

struct Report {
  fs::path models;
  fs::path data;
  std::vector<fs::path> sweeps;
  fs::path out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--models", models, "ensemble directory from train")->required();
    cmd->add_option("--data", data, "dataset directory to re-score the ensemble on");
    cmd->add_option("--sweep", sweeps, "sweep CSVs to summarize");
    cmd->add_option("--out", out, "report path (default <models>/report.txt)");
  }

  int run(const Global&) {
    const auto ensemble = load_ensemble(models);
    const auto kv = load_key_values(models / "manifest.txt");
    const double delta = std::stod(kv.at("delta"));
    std::ostringstream os;
    os << "ensemble: " << models.string() << " (" << ensemble.size() << " " << kv.at("system") << " models, seeds "
       << kv.at("model_seeds") << ")\n";
    os << "validation Huber (best epoch): " << kv.at("val_huber_mean") << " +- " << kv.at("val_huber_std") << "\n";
    os << "test Huber: " << kv.at("test_huber_mean") << " +- " << kv.at("test_huber_std") << "\n";
    if (!data.empty()) {
      need_file(data / split_files::manifest, "dataset", "gen-data");
      const auto splits = load_splits(data);
      for (const auto& [name, set] : {std::pair{"train", &splits.train}, std::pair{"val", &splits.val},
                                      std::pair{"test", &splits.test}}) {
        std::vector<double> losses;
        for (const auto& m : ensemble) losses.push_back(evaluate_loss(m, *set, delta));
        const auto s = mean_std(losses);
        os << name << " Huber on " << data.string() << ": " << fmt_double(s.mean) << " +- " << fmt_double(s.std) << "\n";
      }
    }
    for (const auto& p : sweeps) {
      need_file(p, "sweep", "predict-sweep");
      const auto res = load_sweep_csv(p);
      std::size_t failed = 0, chaotic = 0, hyper = 0;
      for (const auto& r : res.rows) {
        if (!r.ok) {
          ++failed;
          continue;
        }
        if (!res.has_predictions) continue;
        const auto d = classify(r.mean);
        chaotic += d != Dynamics::Regular;
        hyper += d == Dynamics::Hyperchaotic;
      }
      os << p.string() << ": " << res.rows.size() << " points, " << failed << " failed";
      if (res.has_predictions) os << ", predicted chaotic " << chaotic << ", hyperchaotic " << hyper;
      if (res.huber) os << ", Huber vs classical " << fmt_double(res.huber->mean) << " +- " << fmt_double(res.huber->std);
      os << "\n";
    }
    if (out.empty()) out = models / "report.txt";
    binio::atomic_write(out, [&](std::ostream& f) { f << os.str(); }, std::ios::out);
    std::cout << os.str();
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lyapunov spectra of Lorenz systems: classical estimation and CNN prediction"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  Global g;
  app.add_option("--jobs,-j", g.jobs, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--root", g.root, concat("default output root (env ", kRootEnv, ")"))->capture_default_str();
  app.add_flag("--quiet,-q", g.quiet, "no progress output");

  GenData gen;
  Train tr;
  ClassicalSweep cs;
  PredictSweep ps;
  ErrorAnalysis ea;
  Report rep;
  gen.attach(app.add_subcommand("gen-data", "generate a labeled dataset (train/val/test + manifest)"));
  tr.attach(app.add_subcommand("train", "train the CNN ensemble on a dataset"));
  cs.attach(app.add_subcommand("classical-sweep", "classical spectra on an r-line or (r, b)-plane"));
  ps.attach(app.add_subcommand("predict-sweep", "ensemble predictions on an r-line or (r, b)-plane"));
  ea.attach(app.add_subcommand("error-analysis", "binned |prediction - truth| table"));
  rep.attach(app.add_subcommand("report", "ensemble Huber statistics (mean +- std over models)"));

  CLI11_PARSE(app, argc, argv);
  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "gen-data") return gen.run(g);
    if (name == "train") return tr.run(g);
    if (name == "classical-sweep") return cs.run(g);
    if (name == "predict-sweep") return ps.run(g);
    if (name == "error-analysis") return ea.run(g);
    return rep.run(g);
  } catch (const std::exception& e) {
    std::cerr << "lyapnet: error: " << e.what() << "\n";
    return 1;
  }
}
