#include "lungct/callbacks.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <string>

#include "lungct/error.hpp"

namespace lungct {

void TrainConfig::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorKind::InvalidValue, what); };
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) fail("initial_lr must be finite and > 0");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) fail("lr_factor must lie in (0,1)");
  if (lr_patience < 0) fail("lr_patience must be >= 0");
  if (!(min_lr >= 0.0) || min_lr > initial_lr) fail("min_lr must lie in [0, initial_lr]");
  if (early_stop_patience < 0) fail("early_stop_patience must be >= 0");
  if (!(min_delta >= 0.0) || !std::isfinite(min_delta)) fail("min_delta must be finite and >= 0");
}

void EpochHistory::append(const EpochRow& row) {
  if (!rows_.empty() && row.epoch <= rows_.back().epoch) {
    throw Error(ErrorKind::InvalidValue, "history epochs must strictly increase");
  }
  rows_.push_back(row);
}

std::optional<EpochRow> EpochHistory::best(double min_delta) const {
  ImprovementTracker tracker(min_delta);
  std::optional<EpochRow> best;
  for (const auto& row : rows_) {
    if (tracker.observe(row.val_loss)) best = row;
  }
  return best;
}

bool ImprovementTracker::observe(double value) {
  if (value < best_ - min_delta_) {
    best_ = value;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

PlateauScheduler::PlateauScheduler(const TrainConfig& cfg, double initial_lr)
    : tracker_(cfg.min_delta), patience_(cfg.lr_patience), factor_(cfg.lr_factor), min_lr_(cfg.min_lr),
      lr_(initial_lr) {}

double PlateauScheduler::step(double val_loss) {
  tracker_.observe(val_loss);
  if (tracker_.wait() >= patience_ && tracker_.wait() > 0) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    tracker_.reset_wait();
  }
  return lr_;
}

EarlyStopping::EarlyStopping(const TrainConfig& cfg) : tracker_(cfg.min_delta), patience_(cfg.early_stop_patience) {}

bool EarlyStopping::step(double val_loss) {
  improved_last_ = tracker_.observe(val_loss);
  return tracker_.wait() >= patience_ && tracker_.wait() > 0;
}

double lr_on_plateau(const EpochHistory& history, const TrainConfig& cfg, double current_lr) {
  if (history.empty()) throw Error(ErrorKind::EmptyHistory, "plateau rule needs at least one epoch");
  // The rate itself does not influence the counter, so replay with a unit rate
  // and watch whether the final step reduces it.
  PlateauScheduler replay(cfg, 1.0);
  double before = 1.0;
  double after = 1.0;
  for (const auto& row : history.rows()) {
    before = replay.lr();
    after = replay.step(row.val_loss);
  }
  if (after < before) return std::max(current_lr * cfg.lr_factor, cfg.min_lr);
  return current_lr;
}

bool early_stop(const EpochHistory& history, const TrainConfig& cfg) {
  if (history.empty()) throw Error(ErrorKind::EmptyHistory, "early stopping needs at least one epoch");
  EarlyStopping replay(cfg);
  bool stop = false;
  for (const auto& row : history.rows()) stop = replay.step(row.val_loss);
  return stop;
}

void write_history_csv(const EpochHistory& history, std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  for (const auto& r : history.rows()) {
    out << fmt::format("{},{},{},{},{},{}\n", r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.lr);
  }
}

void write_history_csv(const EpochHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
  write_history_csv(history, out);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

EpochHistory read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,val_loss,val_acc,lr") {
    throw Error(ErrorKind::InvalidValue, "unexpected history header in " + path.string());
  }
  EpochHistory history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    EpochRow r;
    if (!(fields >> r.epoch >> r.train_loss >> r.train_accuracy >> r.val_loss >> r.val_accuracy >> r.lr)) {
      throw Error(ErrorKind::InvalidValue, "malformed history row in " + path.string());
    }
    history.append(r);
  }
  return history;
}

} // namespace lungct
