#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

namespace gfi::acceptance {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome = Outcome::fail;
  std::string detail;
};

inline Verdict pass_if(bool ok, std::string detail) {
  return {ok ? Outcome::pass : Outcome::fail, std::move(detail)};
}

inline Verdict skipped(std::string why) { return {Outcome::skip, std::move(why)}; }

/// Runs criteria and prints one line each: PASS/FAIL/SKIP, id, title, measurements, wall time.
class Report {
 public:
  void run(const std::string& id, const std::string& title, double time_limit_s,
           const std::function<Verdict()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.outcome == Outcome::pass && time_limit_s > 0 && s > time_limit_s) {
      v.outcome = Outcome::fail;
      v.detail += "; over the time limit";
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    std::printf("[%s] criterion %s: %s | %s | %.2f s\n", tag, id.c_str(), title.c_str(),
                v.detail.c_str(), s);
    std::fflush(stdout);
    ++(v.outcome == Outcome::pass ? passed_ : v.outcome == Outcome::fail ? failed_ : skipped_);
  }

  /// 0 when everything ran and passed, 1 on any failure, 77 when nothing ran.
  int exit_code() const {
    std::printf("summary: %d passed, %d failed, %d skipped\n", passed_, failed_, skipped_);
    if (failed_ > 0) return 1;
    return passed_ == 0 ? 77 : 0;
  }

 private:
  int passed_ = 0;
  int failed_ = 0;
  int skipped_ = 0;
};

}  // namespace gfi::acceptance
