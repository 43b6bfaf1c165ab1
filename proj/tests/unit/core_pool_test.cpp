#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "mles/core/artifact_store.hpp"
#include "mles/core/fingerprint.hpp"
#include "mles/core/hash.hpp"
#include "mles/core/ledger.hpp"
#include "mles/operators/task_spec.hpp"
#include "mles/pool/policy_pool.hpp"
#include "mles/pool/rng.hpp"
#include "test_support.hpp"

namespace mles {
namespace {

using test::make_individual;

// ---- hashing -----------------------------------------------------------------

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, Base64RoundTrip) {
  EXPECT_EQ(base64_encode(std::string_view("hello")), "aGVsbG8=");
  EXPECT_EQ(base64_encode(std::string_view("")), "");
  std::mt19937 gen(3);
  for (int len = 0; len < 70; ++len) {
    Bytes data(static_cast<std::size_t>(len));
    for (auto& b : data) b = static_cast<std::uint8_t>(gen());
    EXPECT_EQ(base64_decode(base64_encode(data)), data) << "length " << len;
  }
}

// ---- fingerprint -------------------------------------------------------------

TEST(Fingerprint, TrailingWhitespaceAndBlankLinesIgnored) {
  EXPECT_EQ(fingerprint("def f():\n return 0"), fingerprint("def f():\n return 0   \n\n"));
}

TEST(Fingerprint, DistinctContentDiffers) {
  EXPECT_NE(fingerprint("def f():\n return 0"), fingerprint("def f():\n return 1"));
}

TEST(Fingerprint, EmptyCodeRejected) {
  for (const char* code : {"", "   ", "\n\t\r\n  \n"}) {
    try {
      (void)fingerprint(code);
      FAIL() << "expected EmptyCode";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyCode);
    }
  }
}

// Whitespace-only edits: widen or retype runs of blanks, add trailing blanks,
// insert blank lines and change line terminators. Nothing is inserted where
// the original had no whitespace.
std::string perturb_whitespace(const std::string& code, std::mt19937_64& gen) {
  auto coin = [&](int one_in) { return gen() % static_cast<unsigned>(one_in) == 0; };
  auto blanks = [&](int min_len) {
    std::string out;
    const int n = min_len + static_cast<int>(gen() % 4);
    for (int i = 0; i < n; ++i) out.push_back(coin(3) ? '\t' : ' ');
    return out;
  };
  auto newline = [&] {
    switch (gen() % 3) {
      case 0: return std::string("\n");
      case 1: return std::string("\r\n");
      default: return std::string("\r");
    }
  };
  std::string out;
  std::size_t i = 0;
  while (i < code.size()) {
    const char c = code[i];
    if (c == ' ' || c == '\t') {
      while (i < code.size() && (code[i] == ' ' || code[i] == '\t')) ++i;
      out += coin(2) ? blanks(1) : std::string(" ");
      continue;
    }
    if (c == '\n') {
      if (coin(4)) out += blanks(1);
      out += newline();
      while (coin(5)) out += (coin(2) ? blanks(0) : std::string()) + newline();
      ++i;
      continue;
    }
    out.push_back(c);
    ++i;
  }
  if (coin(2)) out += blanks(0) + newline();
  return out;
}

TEST(Fingerprint, TenThousandWhitespacePerturbationsShareOneHash) {
  const auto base = builtin_task(TaskKind::lunar_lander).code_template;
  std::mt19937_64 gen(20240601);
  std::set<std::string> hashes;
  std::size_t changed = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto variant = perturb_whitespace(base, gen);
    changed += variant != base ? 1 : 0;
    hashes.insert(fingerprint(variant));
  }
  EXPECT_EQ(hashes.size(), 1u);
  EXPECT_GT(changed, 9000u);  // the generator really edits
  EXPECT_EQ(*hashes.begin(), fingerprint(base));
}

TEST(Fingerprint, EntryPointCounting) {
  EXPECT_EQ(count_definitions("def choose_action(s):\n  return 0\n", "choose_action"), 1u);
  EXPECT_EQ(count_definitions("def choose_action (s):\n  pass\ndef choose_action(s):\n  pass\n", "choose_action"), 2u);
  EXPECT_EQ(count_definitions("def choose_action_fast(s):\n  pass\n", "choose_action"), 0u);
  EXPECT_EQ(count_definitions("undef choose_action(s):\n", "choose_action"), 0u);
  EXPECT_NO_THROW(require_single_entry_point("import x\ndef choose_action(s):\n  return 1\n", "choose_action"));
  try {
    require_single_entry_point("def helper():\n  pass\n", "choose_action");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidEntryPoint);
  }
}

// ---- domain types --------------------------------------------------------------

TEST(Types, InstanceMetricsJsonRoundTrip) {
  InstanceMetrics lander{"seed-1", 120.5, 300, LanderOutcome{42.0, true}};
  InstanceMetrics racing{"track-2", 800.0, 1000, RacingOutcome{91.5}};
  EXPECT_EQ(json(lander).get<InstanceMetrics>(), lander);
  EXPECT_EQ(json(racing).get<InstanceMetrics>(), racing);
  EXPECT_EQ(lander.task(), TaskKind::lunar_lander);
  EXPECT_EQ(racing.task(), TaskKind::car_racing);
}

TEST(Types, InstanceMetricsNeedExactlyOneFieldGroup) {
  json both{{"instance_id", "x"}, {"episode_reward", 1.0}, {"fuel", 1.0}, {"success", true}, {"completion", 5.0}};
  json neither{{"instance_id", "x"}, {"episode_reward", 1.0}};
  for (const auto& j : {both, neither}) {
    try {
      (void)j.get<InstanceMetrics>();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ProtocolError);
    }
  }
}

TEST(Types, IndividualJsonRoundTrip) {
  auto p = make_individual("g3-0001", 0.25);
  p.ibe.push_back({IbeKind::frame_stack_image, "seed-42", "artifacts/abc.png", std::string(kMediaPng)});
  p.origin = {{"g2-0000", "g1-0003"}, OperatorKind::E2, 3, std::string("deadbeef")};
  EXPECT_EQ(json(p).get<PolicyIndividual>(), p);

  auto seed = make_individual("g0-0000", 0.1);
  EXPECT_EQ(json(seed).get<PolicyIndividual>(), seed);
}

TEST(Types, UnevaluatedScoreThrows) {
  PolicyIndividual p;
  p.id = "x";
  try {
    (void)p.score();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnevaluatedCandidate);
  }
}

TEST(Types, OperatorAndTaskNames) {
  for (auto op : kAllOperators) EXPECT_EQ(parse_operator(to_string(op)), op);
  EXPECT_EQ(parse_task_kind("car_racing"), TaskKind::car_racing);
  EXPECT_THROW(parse_operator("M3"), Error);
  EXPECT_THROW(parse_task_kind("cartpole"), Error);
}

// ---- ledger ------------------------------------------------------------------

LedgerEvent ev(std::int64_t seq) { return {seq, "test", {{"n", seq}}}; }

TEST(Ledger, AppendToEmpty) {
  const auto l = ledger_append(RunLedger{}, ev(0));
  EXPECT_EQ(l.size(), 1u);
}

TEST(Ledger, GapRejected) {
  RunLedger l;
  for (int i = 0; i < 3; ++i) l = ledger_append(l, ev(i));
  try {
    (void)ledger_append(l, ev(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SequenceGap);
  }
  EXPECT_EQ(l.size(), 3u);
  EXPECT_THROW(l.append(ev(2)), Error);
}

TEST(Ledger, FileMirrorAndReload) {
  test::TempDir dir;
  const auto path = dir / "ledger.jsonl";
  RunLedger l;
  l.attach_file(path, true);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(l.emit("tick", {{"i", i}}), i);
  EXPECT_EQ(test::slurp(path), l.to_jsonl());
  const auto loaded = load_ledger(path);
  EXPECT_EQ(loaded, l.events());

  write_file(dir / "gap.jsonl", ev(0).to_line() + "\n" + ev(2).to_line() + "\n");
  try {
    (void)load_ledger(dir / "gap.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SequenceGap);
  }
}

TEST(Ledger, ConcurrentEmitsStayContiguous) {
  RunLedger l;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 250; ++i) l.emit("x", json::object());
    });
  }
  for (auto& t : threads) t.join();
  const auto events = l.events();
  ASSERT_EQ(events.size(), 1000u);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, static_cast<std::int64_t>(i));
}

TEST(ArtifactStore, ContentAddressed) {
  test::TempDir dir;
  ArtifactStore store(dir.path());
  const auto a = store.put(std::string_view("payload"), "txt");
  const auto b = store.put(std::string_view("payload"), "txt");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, "artifacts/" + sha256_hex("payload") + ".txt");
  EXPECT_EQ(store.get(a), "payload");
  try {
    (void)store.get("artifacts/missing.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

// ---- rng ---------------------------------------------------------------------

TEST(Rng, DerivedStreamsArePositional) {
  EXPECT_EQ(derive_seed(1, {2, 3, 4}), derive_seed(1, {2, 3, 4}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t g = 0; g < 20; ++g) {
    for (std::uint64_t s = 0; s < 4; ++s) {
      for (std::uint64_t r = 0; r < 4; ++r) seen.insert(derive_seed(9, {g, s, r}));
    }
  }
  EXPECT_EQ(seen.size(), 20u * 4u * 4u);
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(5);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

// ---- selection weights -----------------------------------------------------------

// Exact fraction arithmetic for small denominators.
struct Fraction {
  long long num;
  long long den;
};

Fraction normalize(Fraction f) {
  const auto g = std::gcd(f.num, f.den);
  return {f.num / g, f.den / g};
}

std::vector<Fraction> exact_weights(const std::vector<std::size_t>& ranks, long long n) {
  long long lcm = 1;
  for (auto r : ranks) lcm = std::lcm(lcm, static_cast<long long>(r) + n);
  long long total = 0;
  for (auto r : ranks) total += lcm / (static_cast<long long>(r) + n);
  std::vector<Fraction> out;
  for (auto r : ranks) out.push_back(normalize({lcm / (static_cast<long long>(r) + n), total}));
  return out;
}

TEST(SelectionWeights, SingleCandidate) {
  const std::vector<std::size_t> ranks{1};
  const auto w = selection_weights(ranks, 1);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(SelectionWeights, TwoRanksExactRational) {
  const std::vector<std::size_t> ranks{1, 2};
  const auto exact = exact_weights(ranks, 2);
  EXPECT_EQ(exact[0].num, 4);
  EXPECT_EQ(exact[0].den, 7);
  EXPECT_EQ(exact[1].num, 3);
  EXPECT_EQ(exact[1].den, 7);
  const auto w = selection_weights(ranks, 2);
  EXPECT_NEAR(w[0], 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(w[1], 3.0 / 7.0, 1e-15);
}

TEST(SelectionWeights, FourRanksMatchRationalOracle) {
  const std::vector<std::size_t> ranks{1, 2, 3, 4};
  const auto exact = exact_weights(ranks, 4);
  const auto w = selection_weights(ranks, 4);
  const double expected_rounded[] = {0.3152, 0.2627, 0.2251, 0.1970};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(w[i], static_cast<double>(exact[i].num) / static_cast<double>(exact[i].den), 1e-15);
    EXPECT_NEAR(w[i], expected_rounded[i], 5e-5);
  }
}

TEST(SelectionWeights, SumToOneAndStrictlyDecreasing) {
  for (std::size_t size = 1; size <= 64; ++size) {
    std::vector<std::size_t> ranks(size);
    std::iota(ranks.begin(), ranks.end(), std::size_t{1});
    for (std::size_t n = 1; n <= 64; ++n) {
      const auto w = selection_weights(ranks, n);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      ASSERT_NEAR(total, 1.0, 1e-12) << "size " << size << " N " << n;
      for (std::size_t i = 0; i < size; ++i) {
        ASSERT_GT(w[i], 0.0);
        if (i > 0) {
          ASSERT_LT(w[i], w[i - 1]);
        }
      }
    }
  }
}

TEST(SelectionWeights, PermutationEquivariant) {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 1 + gen() % 20;
    std::vector<std::size_t> ranks(size);
    std::iota(ranks.begin(), ranks.end(), std::size_t{1});
    const auto base = selection_weights(ranks, 16);
    auto shuffled = ranks;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto w = selection_weights(shuffled, 16);
    for (std::size_t i = 0; i < size; ++i) ASSERT_DOUBLE_EQ(w[i], base[shuffled[i] - 1]);
  }
}

TEST(SelectionWeights, Preconditions) {
  const std::vector<std::size_t> none;
  try {
    (void)selection_weights(none, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyPool);
  }
  for (const std::vector<std::size_t>& bad : {std::vector<std::size_t>{0, 1}, {1, 1}, {1, 3}}) {
    try {
      (void)selection_weights(bad, 4);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
  }
}

// ---- parent selection ------------------------------------------------------------

PolicyPool pool_of(std::size_t n, std::size_t capacity = 16) {
  std::vector<PolicyIndividual> members;
  for (std::size_t i = 0; i < n; ++i) members.push_back(make_individual("m" + std::to_string(i), 1.0 - 0.01 * i));
  return admit_offspring(PolicyPool(capacity), members).pool;
}

TEST(SelectParents, PoolOfOneRepeats) {
  const auto pool = pool_of(1);
  Rng rng(1);
  const auto parents = select_parents(pool, 2, rng);
  ASSERT_EQ(parents.size(), 2u);
  EXPECT_EQ(parents[0].id, "m0");
  EXPECT_EQ(parents[1].id, "m0");
}

TEST(SelectParents, PoolOfTwoNeverDuplicates) {
  const auto pool = pool_of(2);
  int first_m0 = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const auto parents = select_parents(pool, 2, rng);
    ASSERT_EQ(parents.size(), 2u);
    ASSERT_NE(parents[0].id, parents[1].id);
    first_m0 += parents[0].id == "m0" ? 1 : 0;
  }
  EXPECT_GT(first_m0, 0);
  EXPECT_LT(first_m0, 500);
}

TEST(SelectParents, PartialFillUsesReplacementOnlyForExtraSlots) {
  const auto pool = pool_of(2);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto parents = select_parents(pool, 5, rng);
    ASSERT_EQ(parents.size(), 5u);
    ASSERT_NE(parents[0].id, parents[1].id);
  }
}

TEST(SelectParents, DeterministicForSeed) {
  const auto pool = pool_of(16);
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 50; ++i) {
    const auto pa = select_parents(pool, 2, a);
    const auto pb = select_parents(pool, 2, b);
    ASSERT_EQ(pa[0].id, pb[0].id);
    ASSERT_EQ(pa[1].id, pb[1].id);
  }
}

TEST(SelectParents, SecondDrawRenormalizes) {
  // Conditional on the first draw being rank 1, the second follows the
  // remaining weights renormalized.
  const auto pool = pool_of(4, 4);
  std::map<std::string, int> second;
  int conditioned = 0;
  Rng rng(4242);
  for (int i = 0; i < 200000; ++i) {
    const auto p = select_parents(pool, 2, rng);
    if (p[0].id != "m0") continue;
    ++conditioned;
    ++second[p[1].id];
  }
  const double w[] = {1.0 / 6, 1.0 / 7, 1.0 / 8};
  const double total = w[0] + w[1] + w[2];
  for (int k = 0; k < 3; ++k) {
    const double freq = static_cast<double>(second["m" + std::to_string(k + 1)]) / conditioned;
    EXPECT_NEAR(freq, w[k] / total, 0.01);
  }
}

// Goodness of fit across many seeds: the mean chi-square statistic of the
// first-draw histogram should sit near its 15 degrees of freedom, and the
// p < 0.01 tail should be hit only rarely.
TEST(SelectParents, FirstDrawChiSquareCalibrated) {
  const auto pool = pool_of(16);
  double norm = 0;
  for (int r = 1; r <= 16; ++r) norm += 1.0 / (r + 16);
  constexpr int kSeeds = 40;
  constexpr int kDraws = 25000;
  double sum = 0;
  int tail = 0;
  for (int s = 0; s < kSeeds; ++s) {
    Rng rng(5000 + s);
    std::map<std::string, int> counts;
    for (int i = 0; i < kDraws; ++i) ++counts[select_parents(pool, 2, rng).front().id];
    double chi2 = 0;
    for (int r = 1; r <= 16; ++r) {
      const double e = kDraws / (r + 16.0) / norm;
      const double d = counts["m" + std::to_string(r - 1)] - e;
      chi2 += d * d / e;
    }
    sum += chi2;
    tail += chi2 > 30.578 ? 1 : 0;  // 0.99 quantile for 15 degrees of freedom
  }
  EXPECT_NEAR(sum / kSeeds, 15.0, 3.0);
  EXPECT_LE(tail, 3);
}

TEST(SelectParents, EmptyPoolRejected) {
  Rng rng(1);
  try {
    (void)select_parents(PolicyPool(16), 2, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyPool);
  }
}

// ---- admission ---------------------------------------------------------------------

TEST(Admission, FullPoolEvictsWorst) {
  std::vector<PolicyIndividual> members;
  for (int i = 0; i < 16; ++i) members.push_back(make_individual("m" + std::to_string(i), 0.3 + 0.01 * i));
  const auto full = admit_offspring(PolicyPool(16), members).pool;
  ASSERT_EQ(full.size(), 16u);
  const PolicyIndividual cand[] = {make_individual("c", 0.9)};
  const auto r = admit_offspring(full, cand);
  EXPECT_EQ(r.pool.size(), 16u);
  EXPECT_EQ(r.pool.best().id, "c");
  EXPECT_EQ(r.admitted, std::vector<std::string>{"c"});
  EXPECT_EQ(r.evicted, std::vector<std::string>{"m0"});
  const auto ids = r.pool.ids();
  EXPECT_EQ(std::count(ids.begin(), ids.end(), "m0"), 0);
}

TEST(Admission, DuplicateFingerprintLeavesPoolUnchanged) {
  const auto pool = pool_of(3);
  auto dup = make_individual("dup", 5.0);
  dup.code = pool.members()[1].individual.code + "   \n\n";
  dup.fingerprint = fingerprint(dup.code);
  const PolicyIndividual cand[] = {dup};
  const auto r = admit_offspring(pool, cand);
  EXPECT_EQ(r.pool, pool);
  EXPECT_EQ(r.redundant, std::vector<std::string>{"dup"});
  EXPECT_TRUE(r.admitted.empty());
}

TEST(Admission, DuplicateWithinBatchKeepsFirst) {
  auto a = make_individual("a", 0.1);
  auto b = make_individual("b", 0.9);
  b.code = a.code;
  b.fingerprint = a.fingerprint;
  const PolicyIndividual cands[] = {a, b};
  const auto r = admit_offspring(PolicyPool(16), cands);
  EXPECT_EQ(r.pool.ids(), std::vector<std::string>{"a"});
  EXPECT_EQ(r.redundant, std::vector<std::string>{"b"});
}

TEST(Admission, TwentyCandidatesKeepTopSixteen) {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  std::vector<PolicyIndividual> cands;
  for (int i = 0; i < 20; ++i) cands.push_back(make_individual("c" + std::to_string(i), score(gen)));
  const auto r = admit_offspring(PolicyPool(16), cands);

  auto oracle = cands;
  std::stable_sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) { return x.score() > y.score(); });
  oracle.resize(16);
  std::vector<std::string> expected;
  for (const auto& c : oracle) expected.push_back(c.id);
  EXPECT_EQ(r.pool.ids(), expected);
  EXPECT_EQ(r.rejected.size(), 4u);
}

TEST(Admission, TiesBrokenByEarlierAdmission) {
  const PolicyIndividual first[] = {make_individual("old", 0.5)};
  const auto pool = admit_offspring(PolicyPool(16), first).pool;
  const PolicyIndividual second[] = {make_individual("new", 0.5)};
  const auto r = admit_offspring(pool, second);
  EXPECT_EQ(r.pool.ids(), (std::vector<std::string>{"old", "new"}));
}

TEST(Admission, FailedRankAfterSuccessful) {
  const PolicyIndividual cands[] = {make_individual("bad", 5.0, true), make_individual("ok", -0.5)};
  const auto r = admit_offspring(PolicyPool(16), cands);
  EXPECT_EQ(r.pool.ids(), (std::vector<std::string>{"ok", "bad"}));

  const auto strict = admit_offspring(PolicyPool(16, false), cands);
  EXPECT_EQ(strict.pool.ids(), std::vector<std::string>{"ok"});
  EXPECT_EQ(strict.rejected, std::vector<std::string>{"bad"});
}

TEST(Admission, UnevaluatedCandidateRejected) {
  auto c = make_individual("c", 0.1);
  c.metrics.reset();
  const PolicyIndividual cands[] = {c};
  try {
    (void)admit_offspring(PolicyPool(16), cands);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnevaluatedCandidate);
  }
}

TEST(Admission, InvariantsUnderRandomSequences) {
  std::mt19937_64 gen(77);
  int next_id = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t capacity = 1 + gen() % 20;
    PolicyPool pool(capacity, gen() % 2 == 0);
    for (int step = 0; step < 10; ++step) {
      std::vector<PolicyIndividual> cands;
      const int k = static_cast<int>(gen() % 12);
      for (int i = 0; i < k; ++i) {
        auto c = make_individual("x" + std::to_string(next_id++), static_cast<double>(gen() % 100) / 10.0,
                                 gen() % 5 == 0);
        if (gen() % 6 == 0 && !pool.empty()) {
          c.code = pool.members()[gen() % pool.size()].individual.code;
          c.fingerprint = fingerprint(c.code);
        }
        cands.push_back(c);
      }
      const auto r = admit_offspring(pool, cands);
      ASSERT_LE(r.pool.size(), capacity);
      std::set<std::string> fps;
      for (const auto& m : r.pool.members()) ASSERT_TRUE(fps.insert(m.individual.fingerprint).second);
      for (std::size_t i = 1; i < r.pool.size(); ++i) {
        ASSERT_FALSE(PolicyPool::ranks_before(r.pool.members()[i], r.pool.members()[i - 1]));
      }
      ASSERT_EQ(r.admitted.size() + r.redundant.size() + r.rejected.size(), cands.size());
      pool = r.pool;
    }
  }
}

TEST(Pool, JsonRoundTrip) {
  auto pool = pool_of(5, 8);
  const auto back = pool_from_json(json::parse(pool_to_json(pool).dump()));
  EXPECT_EQ(back, pool);
  EXPECT_EQ(back.next_admission(), pool.next_admission());
}

TEST(Pool, RankAccess) {
  const auto pool = pool_of(3);
  EXPECT_EQ(pool.at_rank(1).id, "m0");
  EXPECT_EQ(pool.at_rank(3).id, "m2");
  EXPECT_THROW((void)pool.at_rank(0), Error);
  EXPECT_THROW((void)pool.at_rank(4), Error);
  EXPECT_THROW(PolicyPool(0), Error);
  try {
    (void)PolicyPool(4).best();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyPool);
  }
}

} // namespace
} // namespace mles
