#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace almr {

// Pipeline stage that raised an error. The CLI maps each stage to a fixed
// exit code, so the first failing stage fully determines the exit status.
enum class Stage { parse, fit, frontier, intersect, lab };

constexpr std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::parse: return "parse";
    case Stage::fit: return "fit";
    case Stage::frontier: return "frontier";
    case Stage::intersect: return "intersect";
    case Stage::lab: return "lab";
  }
  return "unknown";
}

constexpr int exit_code(Stage s) {
  switch (s) {
    case Stage::parse: return 2;
    case Stage::fit: return 3;
    case Stage::frontier: return 4;
    case Stage::intersect: return 5;
    case Stage::lab: return 6;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(Stage stage, const std::string& what)
      : std::runtime_error(what), stage_(stage) {}

  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

// Training produced a non-finite or runaway loss.
class DivergenceError : public Error {
 public:
  DivergenceError(long long step, double loss)
      : Error(Stage::lab, "training diverged at step " + std::to_string(step) +
                              " (loss " + std::to_string(loss) + ")"),
        step_(step),
        loss_(loss) {}

  long long step() const noexcept { return step_; }
  double loss() const noexcept { return loss_; }

 private:
  long long step_;
  double loss_;
};

}  // namespace almr
