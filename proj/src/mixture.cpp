#include "almr/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"
#include "rng.hpp"

namespace almr {

namespace {

using i128 = __int128;

// Largest-remainder split of `quota` proportionally to `weights`; ties in the
// remainder go to the lower index. Exact integer arithmetic, so scaling all
// weights by a constant leaves the result unchanged.
std::vector<std::int64_t> apportion(std::int64_t quota,
                                    const std::vector<std::int64_t>& weights) {
  const i128 total = std::accumulate(weights.begin(), weights.end(), i128(0));
  std::vector<std::int64_t> out(weights.size(), 0);
  if (quota == 0) return out;
  std::vector<i128> rem(weights.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const i128 num = i128(quota) * weights[i];
    out[i] = std::int64_t(num / total);
    rem[i] = num % total;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < quota; ++k, ++assigned) ++out[order[k]];
  return out;
}

std::int64_t gcd64(std::int64_t a, std::int64_t b) { return std::gcd(a, b); }

}  // namespace

std::map<std::string, std::int64_t> MixturePlan::quotas() const {
  std::map<std::string, std::int64_t> out;
  for (const auto& a : allocations) out[a.name] = a.quota;
  return out;
}

std::map<std::string, double> MixturePlan::passes() const {
  std::map<std::string, double> out;
  for (const auto& a : allocations) out[a.name] = a.passes;
  return out;
}

std::string MixturePlan::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["target_almr_percent"] = target_almr_percent;
  j["total_tokens"] = total_tokens;
  j["additional_tokens"] = additional_tokens;
  auto ds = nlohmann::ordered_json::array();
  for (const auto& a : allocations) {
    nlohmann::ordered_json d;
    d["name"] = a.name;
    d["language_class"] = to_string(a.language_class);
    d["pool"] = a.pool == Pool::additional ? "additional" : "base";
    d["token_count"] = a.token_count;
    d["quota"] = a.quota;
    d["passes"] = a.passes;
    ds.push_back(d);
  }
  j["datasets"] = ds;
  j["warnings"] = warnings;
  return j.dump(2);
}

MixturePlan plan(const CorpusInventory& inventory, double almr_percent,
                 std::int64_t total_tokens, const PlanOptions& options) {
  inventory.validate();
  if (!(almr_percent >= 0.0 && almr_percent <= 100.0))
    throw Error(Stage::parse, "almr_percent must lie in [0, 100]");
  if (total_tokens <= 0) throw Error(Stage::parse, "total_tokens must be > 0");

  MixturePlan p;
  p.target_almr_percent = almr_percent;
  p.total_tokens = total_tokens;
  p.additional_tokens =
      std::llround(almr_percent / 100.0 * double(total_tokens));
  p.additional_tokens = std::clamp<std::int64_t>(p.additional_tokens, 0, total_tokens);

  std::vector<std::int64_t> extra_w, base_w;
  for (const auto& d : inventory.datasets) {
    Allocation a;
    a.name = d.name;
    a.language_class = d.language_class;
    a.pool = d.language_class == LanguageClass::additional ? Pool::additional
                                                           : Pool::base;
    a.token_count = d.token_count;
    (a.pool == Pool::additional ? extra_w : base_w).push_back(d.token_count);
    p.allocations.push_back(std::move(a));
  }
  if (almr_percent > 0.0 && extra_w.empty())
    throw Error(Stage::parse, "ALMR > 0 but the inventory has no additional-"
                              "language dataset");
  if (almr_percent < 100.0 && base_w.empty())
    throw Error(Stage::parse,
                "ALMR < 100 but the inventory has no base dataset");

  const std::int64_t base_quota = total_tokens - p.additional_tokens;
  auto check_pool = [](std::int64_t quota, const std::vector<std::int64_t>& w,
                       const char* pool) {
    if (quota > 0 && std::accumulate(w.begin(), w.end(), std::int64_t(0)) == 0)
      throw Error(Stage::parse,
                  std::string(pool) + " pool has a quota but no tokens");
  };
  check_pool(p.additional_tokens, extra_w, "additional");
  check_pool(base_quota, base_w, "base");

  const auto extra_q = apportion(p.additional_tokens, extra_w);
  const auto base_q = apportion(base_quota, base_w);
  std::size_t ie = 0, ib = 0;
  for (auto& a : p.allocations) {
    a.quota = a.pool == Pool::additional ? extra_q[ie++] : base_q[ib++];
    a.passes = a.token_count > 0 ? double(a.quota) / double(a.token_count) : 0.0;
    if (a.passes > options.pass_warning) {
      std::ostringstream os;
      os << "dataset '" << a.name << "' is repeated " << a.passes
         << " times (threshold " << options.pass_warning << ")";
      p.warnings.push_back(os.str());
    }
  }
  return p;
}

Schedule::Schedule(const MixturePlan& plan, int batch_size, std::uint64_t seed)
    : allocations_(plan.allocations),
      additional_(plan.additional_tokens),
      total_(plan.total_tokens),
      batch_size_(batch_size),
      seed_(seed) {
  if (batch_size < 1) throw Error(Stage::parse, "batch_size must be >= 1");
  if (total_ <= 0) throw Error(Stage::parse, "plan has no tokens");
  perm_mul_.resize(allocations_.size(), 1);
  perm_add_.resize(allocations_.size(), 0);
  for (std::size_t i = 0; i < allocations_.size(); ++i) {
    const std::int64_t n = allocations_[i].token_count;
    if (n <= 1) continue;
    const std::uint64_t h = detail::hash_combine(seed, i);
    std::int64_t mul = std::int64_t(h % std::uint64_t(n));
    while (gcd64(mul, n) != 1) mul = (mul + 1) % n;
    perm_mul_[i] = mul;
    perm_add_[i] = std::int64_t(detail::splitmix64(h) % std::uint64_t(n));
  }
  init_pools();
}

void Schedule::init_pools() {
  base_ = {};
  extra_ = {};
  for (std::size_t i = 0; i < allocations_.size(); ++i) {
    const auto& a = allocations_[i];
    if (a.quota == 0) continue;
    auto& pool = a.pool == Pool::additional ? extra_ : base_;
    pool.members.push_back(int(i));
    pool.quotas.push_back(a.quota);
    pool.credit.push_back(0);
    pool.total += a.quota;
  }
  drawn_.assign(allocations_.size(), 0);
  acc_ = 0;
  position_ = 0;
}

void Schedule::reset() { init_pools(); }

int Schedule::pick(PoolState& pool) {
  std::size_t best = 0;
  for (std::size_t k = 0; k < pool.members.size(); ++k) {
    pool.credit[k] += pool.quotas[k];
    if (pool.credit[k] > pool.credit[best]) best = k;
  }
  pool.credit[best] -= pool.total;
  return pool.members[best];
}

Slot Schedule::next() {
  acc_ += additional_;
  const bool extra = acc_ >= total_;
  if (extra) acc_ -= total_;
  const int d = pick(extra ? extra_ : base_);
  const std::int64_t n = allocations_[d].token_count;
  const std::int64_t k = drawn_[d]++;
  std::int64_t doc = 0;
  if (n > 1)
    doc = std::int64_t((i128(perm_mul_[d]) * (k % n) + perm_add_[d]) % n);
  ++position_;
  return {d, doc};
}

std::vector<Slot> Schedule::next_batch() {
  std::vector<Slot> out;
  out.reserve(batch_size_);
  for (int i = 0; i < batch_size_; ++i) out.push_back(next());
  return out;
}

bool Schedule::is_additional(int dataset) const {
  return allocations_.at(dataset).pool == Pool::additional;
}

const std::string& Schedule::dataset_name(int dataset) const {
  return allocations_.at(dataset).name;
}

double Schedule::target_fraction() const {
  return double(additional_) / double(total_);
}

Schedule sample_schedule(const MixturePlan& plan, int batch_size,
                         std::uint64_t seed) {
  return Schedule(plan, batch_size, seed);
}

double realized_ratio(const Schedule& schedule, std::int64_t prefix_len) {
  if (prefix_len < 1) throw Error(Stage::parse, "prefix_len must be >= 1");
  Schedule s = schedule;
  s.reset();
  std::int64_t extra = 0;
  for (std::int64_t i = 0; i < prefix_len; ++i)
    if (s.is_additional(s.next().dataset)) ++extra;
  return double(extra) / double(prefix_len);
}

std::vector<RunLength> run_length_encode(const Schedule& schedule,
                                         std::int64_t slots) {
  Schedule s = schedule;
  s.reset();
  std::vector<RunLength> out;
  int last = -1;
  for (std::int64_t i = 0; i < slots; ++i) {
    const int d = s.next().dataset;
    if (d == last) {
      ++out.back().count;
    } else {
      out.push_back({s.dataset_name(d), 1});
      last = d;
    }
  }
  return out;
}

std::string schedule_to_json(const Schedule& schedule, std::int64_t slots) {
  nlohmann::ordered_json j;
  j["batch_size"] = schedule.batch_size();
  j["seed"] = schedule.seed();
  j["slots"] = slots;
  auto runs = nlohmann::ordered_json::array();
  for (const auto& r : run_length_encode(schedule, slots))
    runs.push_back({r.dataset, r.count});
  j["runs"] = runs;
  return j.dump();
}

}  // namespace almr
