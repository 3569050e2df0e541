#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace lungct {

struct TrainConfig {
  int max_epochs = 20;
  int batch_size = 32;
  double initial_lr = 1e-4;
  double lr_factor = 0.5;
  int lr_patience = 3;
  double min_lr = 1e-6;
  int early_stop_patience = 5;
  double min_delta = 1e-4;
  std::uint64_t seed = 42;

  /// Throws InvalidValue naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochRow&, const EpochRow&) = default;
};

class EpochHistory {
public:
  /// Throws InvalidValue unless epochs strictly increase.
  void append(const EpochRow& row);

  const std::vector<EpochRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t size() const noexcept { return rows_.size(); }
  const EpochRow& back() const { return rows_.back(); }

  /// Row with the lowest val_loss under the min_delta improvement rule.
  std::optional<EpochRow> best(double min_delta) const;

  friend bool operator==(const EpochHistory&, const EpochHistory&) = default;

private:
  std::vector<EpochRow> rows_;
};

/// Tracks "no improvement by more than min_delta" streaks of a minimized metric.
class ImprovementTracker {
public:
  explicit ImprovementTracker(double min_delta) : min_delta_(min_delta) {}

  /// Returns true when `value` improves on the best so far.
  bool observe(double value);
  void reset_wait() noexcept { wait_ = 0; }

  int wait() const noexcept { return wait_; }
  double best() const noexcept { return best_; }

private:
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

/// Reduce-on-plateau rule. The wait counter resets after every reduction.
class PlateauScheduler {
public:
  PlateauScheduler(const TrainConfig& cfg, double initial_lr);

  /// Feed one epoch's val_loss; returns the learning rate for the next epoch.
  double step(double val_loss);
  double lr() const noexcept { return lr_; }

private:
  ImprovementTracker tracker_;
  int patience_;
  double factor_;
  double min_lr_;
  double lr_;
};

class EarlyStopping {
public:
  explicit EarlyStopping(const TrainConfig& cfg);

  /// Feed one epoch's val_loss; returns true when training should stop.
  bool step(double val_loss);
  bool improved_last() const noexcept { return improved_last_; }

private:
  ImprovementTracker tracker_;
  int patience_;
  bool improved_last_ = false;
};

/// Replays the val_loss column: returns max(current_lr * lr_factor, min_lr)
/// if the last epoch completes a plateau window, else current_lr.
double lr_on_plateau(const EpochHistory& history, const TrainConfig& cfg, double current_lr);

/// True iff the last early_stop_patience epochs failed to improve on the best.
bool early_stop(const EpochHistory& history, const TrainConfig& cfg);

/// `epoch,train_loss,train_acc,val_loss,val_acc,lr` with round-trip precision.
void write_history_csv(const EpochHistory& history, const std::filesystem::path& path);
void write_history_csv(const EpochHistory& history, std::ostream& out);
EpochHistory read_history_csv(const std::filesystem::path& path);

} // namespace lungct
