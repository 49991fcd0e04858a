// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-vkp-cli> [--only N]

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "support/reference.hpp"
#include "vkp/diagnostics.hpp"
#include "vkp/keypoint_fusion.hpp"
#include "vkp/metrics.hpp"
#include "vkp/oracles.hpp"
#include "vkp/pipeline.hpp"
#include "vkp/synth.hpp"

namespace fs = std::filesystem;
using namespace vkp;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) {
    if (pass) detail += (detail.empty() ? "" : "; ") + s;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_cli;
fs::path g_work;

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + g_cli.string() + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  }
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa) {
    if (slurp(a / f) != slurp(b / f)) return false;
  }
  return true;
}

// 1 -------------------------------------------------------------------------
Outcome so3_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  double worst_oracle = 0.0, worst_roundtrip = 0.0;
  std::size_t axiom_failures = 0;
  std::uniform_real_distribution<double> az(0.0, kTwoPi), el(-kHalfPi + 1e-3, kHalfPi - 1e-3), cy(-kPi, kPi);
  for (int i = 0; i < 10000; ++i) {
    const EulerAngles a = ref::random_euler(rng), b = ref::random_euler(rng), c = ref::random_euler(rng);
    const RotationMatrix ra = euler_to_rotation(a), rb = euler_to_rotation(b), rc = euler_to_rotation(c);
    const double d = geodesic_distance(ra, rb);
    const double q = ref::quat_angle(ref::quat_from_euler(a.azimuth(), a.elevation(), a.cyclorotation()),
                                     ref::quat_from_euler(b.azimuth(), b.elevation(), b.cyclorotation()));
    worst_oracle = std::max(worst_oracle, std::fabs(d - q));
    const bool axioms = geodesic_distance(ra, ra) == 0.0 && d >= 0.0 &&
                        std::fabs(d - geodesic_distance(rb, ra)) <= 1e-12 &&
                        geodesic_distance(ra, rc) <= d + geodesic_distance(rb, rc) + 1e-12;
    axiom_failures += !axioms;

    const EulerAngles e(az(rng), el(rng), cy(rng));
    const EulerAngles back = rotation_to_euler(euler_to_rotation(e));
    worst_roundtrip = std::max({worst_roundtrip, azimuth_distance(e.azimuth(), back.azimuth()),
                                std::fabs(e.elevation() - back.elevation()),
                                azimuth_distance(e.cyclorotation(), back.cyclorotation())});
  }
  const double t = seconds_since(t0);
  o.require(worst_oracle <= 1e-9, "quaternion mismatch " + fmt("%.3g", worst_oracle));
  o.require(axiom_failures == 0, std::to_string(axiom_failures) + " metric-axiom failures");
  o.require(worst_roundtrip <= 1e-9, "euler roundtrip error " + fmt("%.3g", worst_roundtrip));
  o.require(t < 5.0, "runtime " + fmt("%.2f s", t));
  o.note("max |geodesic - quaternion| " + fmt("%.2g", worst_oracle) + ", max roundtrip error " +
         fmt("%.2g", worst_roundtrip) + ", " + fmt("%.2f s", t));
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome fusion_oracles() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  std::size_t support_mismatch = 0;
  for (int b = 0; b < 1000; ++b) {
    const PriorBank bank = ref::random_bank(rng, 60, 4);
    const RotationMatrix r = euler_to_rotation(ref::random_euler(rng));
    const auto neighbors = ref::brute_neighbors(r, bank, kDefaultNeighborThreshold);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto got = pose_prior(r, bank, k, kDefaultPriorSigma);
      const auto want = ref::mixture_prior(bank, neighbors, k, kDefaultPriorSigma);
      if (got.has_value() != want.has_value()) {
        ++support_mismatch;
        continue;
      }
      if (!got) continue;
      for (std::size_t c = 0; c < got->size(); ++c) worst = std::max(worst, std::fabs(got->data()[c] - want->data()[c]));
    }
  }
  std::size_t disagreements = 0, tie_cases = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 3);
  for (int t = 0; t < 10000; ++t) {
    Grid prior(12, 12), lik(12, 12);
    const bool ties = t % 2 == 0;
    tie_cases += ties;
    for (std::size_t c = 0; c < 144; ++c) {
      prior.data()[c] = ties ? 0.125 * (1 + level(rng)) : u(rng);
      lik.data()[c] = ties ? static_cast<double>(level(rng)) : std::log(u(rng) + 1e-300);
    }
    if (t % 5 == 0) prior.data()[static_cast<std::size_t>(t) % 144] = 0.0;
    const Point2 got = fuse_and_decode(prior, lik).location;
    disagreements += !(got == synth::oracle_fuse(prior.data(), lik.data(), 12, 12));
  }
  const double t = seconds_since(t0);
  o.require(support_mismatch == 0, std::to_string(support_mismatch) + " support mismatches");
  o.require(worst <= 1e-12, "prior cell error " + fmt("%.3g", worst));
  o.require(disagreements == 0, std::to_string(disagreements) + " decode disagreements");
  o.require(t < 10.0, "runtime " + fmt("%.2f s", t));
  o.note("max prior cell error " + fmt("%.2g", worst) + " over 1000 banks, 0/10000 decode disagreements (" +
         std::to_string(tie_cases) + " tie cases), " + fmt("%.2f s", t));
  return o;
}

// 3 -------------------------------------------------------------------------
Instance fixture_gt(std::string id, Box box, double azimuth) {
  Instance i;
  i.id = std::move(id);
  i.image_id = "img";
  i.bbox = box;
  i.viewpoint = EulerAngles(azimuth, 0.0, 0.0);
  return i;
}

Detection fixture_det(std::string id, Box box, double score, EulerAngles view) {
  Detection d;
  d.id = std::move(id);
  d.image_id = "img";
  d.bbox = box;
  d.score = score;
  d.viewpoint = view;
  return d;
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<int> len(1, 50), score(0, 12);
  std::bernoulli_distribution tp(0.4);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<synth::RankedLabel> ranking(static_cast<std::size_t>(len(rng)));
    std::size_t tps = 0;
    for (auto& r : ranking) {
      r.score = score(rng);
      r.is_tp = tp(rng);
      tps += r.is_tp;
    }
    const std::size_t num_gt = tps + static_cast<std::size_t>(t % 3) + (tps == 0);
    std::vector<std::size_t> order(ranking.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ranking[a].score > ranking[b].score; });
    std::vector<bool> labels;
    for (std::size_t i : order) labels.push_back(ranking[i].is_tp);
    const PrCurve c = pr_curve(labels, num_gt);
    mismatches += voc_ap(c.recall, c.precision) != synth::oracle_ap(ranking, num_gt);
  }
  o.require(mismatches == 0, std::to_string(mismatches) + "/1000 voc_ap vs oracle mismatches");

  const PrCurve hand = pr_curve({true, false, true}, 2);
  const double hand_ap = voc_ap(hand.recall, hand.precision);
  o.require(std::fabs(hand_ap - 0.8333333333) <= 1e-9, "hand-traced AP " + fmt("%.10f", hand_ap));

  // Two objects, three detections: d1 right box, azimuth off by 0.1 and
  // elevation off by 0.6; d2 duplicate of the first object; d3 second object
  // facing the opposite way.
  const std::vector<Instance> gt{fixture_gt("g1", {0, 0, 100, 100}, 0.0),
                                 fixture_gt("g2", {200, 0, 100, 100}, kHalfPi)};
  const std::vector<Detection> dets{fixture_det("d1", {0, 0, 100, 100}, 0.9, {0.1, 0.6, 0.0}),
                                    fixture_det("d2", {2, 0, 100, 100}, 0.8, {0.0, 0.0, 0.0}),
                                    fixture_det("d3", {200, 0, 100, 100}, 0.7, {kPi, 0.0, 0.0})};
  // Hand-enumerated traces: AVP / AVP_θ: TP FP FP; ARP_θ: FP FP FP.
  const std::vector<double> rec_avp{0.5, 0.5, 0.5}, prec_avp{1.0, 0.5, 1.0 / 3.0};
  const std::vector<double> rec_arp{0.0, 0.0, 0.0}, prec_arp{0.0, 0.0, 0.0};
  for (std::size_t bins : {4u, 8u, 16u, 24u}) {
    const auto r = avp(dets, gt, bins);
    o.require(r[0].curve.recall == rec_avp && r[0].curve.precision == prec_avp && r[0].ap == 0.5,
              "AVP(" + std::to_string(bins) + ") trace");
  }
  const auto at = avp_theta(dets, gt, kPi / 6);
  o.require(at[0].curve.recall == rec_avp && at[0].curve.precision == prec_avp && at[0].ap == 0.5, "AVP_theta trace");
  const auto ar = arp_theta(dets, gt, kPi / 6);
  o.require(ar[0].curve.recall == rec_arp && ar[0].curve.precision == prec_arp && ar[0].ap == 0.0, "ARP_theta trace");
  o.note("1000/1000 voc_ap == oracle_ap, hand AP " + fmt("%.10f", hand_ap) + ", AVP/AVP_theta/ARP_theta traces exact");
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome noiseless_end_to_end() {
  Outcome o;
  const fs::path data = g_work / "noiseless", fused = g_work / "noiseless_fused";
  fs::remove_all(data);
  fs::remove_all(fused);
  o.require(run_cli("synth --seed 4 --n 600 --noise zero --out " + data.string()) == 0, "synth failed");
  o.require(run_cli("fuse --dataset " + data.string() + " --out " + fused.string()) == 0, "fuse failed");
  if (!o.pass) return o;
  const std::string base = "--dataset " + data.string() + " --preds " + fused.string() + " --format json --report ";
  o.require(run_cli("evaluate-viewpoint --gt-boxes " + base + (g_work / "vp.json").string()) == 0, "eval vp");
  o.require(run_cli("evaluate-viewpoint --detections " + base + (g_work / "det.json").string()) == 0, "eval det");
  o.require(run_cli("evaluate-keypoints --mode pck --alpha 0.1 " + base + (g_work / "pck.json").string()) == 0,
            "eval pck");
  o.require(run_cli("evaluate-keypoints --mode apk " + base + (g_work / "apk.json").string()) == 0, "eval apk");
  if (!o.pass) return o;
  const auto vp = load_json(g_work / "vp.json")["summary"];
  const auto det = load_json(g_work / "det.json")["summary"];
  const auto pk = load_json(g_work / "pck.json")["summary"];
  const auto ak = load_json(g_work / "apk.json")["summary"];
  auto exact = [&](const nlohmann::json& j, const char* key, double want) {
    const bool ok = j.contains(key) && j[key].is_number() && j[key].get<double>() == want;
    o.require(ok, std::string(key) + " = " + (j.contains(key) ? j[key].dump() : "missing"));
  };
  exact(vp, "med_err", 0.0);
  exact(vp, "acc", 1.0);
  exact(pk, "pck", 1.0);
  exact(pk, "pck_pooled", 1.0);
  for (const char* k : {"avp_4", "avp_8", "avp_16", "avp_24", "avp_theta", "arp_theta"}) exact(det, k, 1.0);
  exact(ak, "apk", 1.0);
  o.note("n=600 via CLI: MedErr 0, Acc 1, PCK 1, AVP(4/8/16/24) 1, ARP 1, APK 1");
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome statistical() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  synth::SceneConfig scene;
  scene.box_min = scene.box_max = 100.0;
  scene.with_maps = false;
  scene.bank_size = 1;
  const Dataset jitter = synth::generate_scene(5005, 10000, synth::NoiseProfile::parse("keypoint_jitter=5"), scene);
  const PckResult p = pck(jitter.instances, jitter.predictions, jitter.manifest.keypoints_per_class(), 0.1);
  const double expected = 1.0 - std::exp(-100.0 / 50.0);
  o.require(std::fabs(*p.pooled - expected) <= 0.02, "PCK " + fmt("%.4f", *p.pooled));

  const Dataset flips = synth::generate_scene(5006, 10000, synth::NoiseProfile::parse("flip10"), scene);
  DiagnoseConfig cfg;
  cfg.error_modes = true;
  const EvalReport r = diagnose(flips, cfg);
  const double flip_pct = *r.summary.at("error_mode/pi_flip");
  o.require(std::fabs(flip_pct - 10.0) <= 1.5, "pi-flip share " + fmt("%.2f%%", flip_pct));
  const double t = seconds_since(t0);
  o.require(t < 60.0, "runtime " + fmt("%.1f s", t));
  o.note("PCK " + fmt("%.4f", *p.pooled) + " vs Rayleigh " + fmt("%.4f", expected) + ", pi-flip " +
         fmt("%.2f%%", flip_pct) + " of " + fmt("%.0f", *r.summary.at("error_mode/count")) + ", " +
         fmt("%.1f s", t));
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome monotonicity() {
  Outcome o;
  synth::SceneConfig scene;
  scene.bank_size = 100;
  const Dataset ds = synth::generate_scene(6006, 2000, synth::NoiseProfile::parse("default"), scene);
  const auto kpc = ds.manifest.keypoints_per_class();

  double prev = -1.0;
  for (double alpha = 0.01; alpha <= 0.5; alpha += 0.01) {
    const double v = *pck(ds.instances, ds.predictions, kpc, alpha).pooled;
    o.require(v >= prev, "PCK decreased at alpha " + fmt("%.2f", alpha));
    prev = v;
  }
  std::vector<RotationPair> pairs;
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    pairs.push_back({euler_to_rotation(*ds.instances[i].viewpoint), euler_to_rotation(*ds.predictions[i].viewpoint)});
  }
  prev = -1.0;
  for (double theta = 0.01; theta <= kPi; theta += 0.01) {
    const double v = accuracy_at(pairs, theta);
    o.require(v >= prev, "Acc decreased at theta " + fmt("%.2f", theta));
    prev = v;
  }
  const auto a4 = avp(ds.detections, ds.instances, 4);
  const auto a24 = avp(ds.detections, ds.instances, 24);
  for (std::size_t c = 0; c < a4.size(); ++c) o.require(a4[c].ap >= a24[c].ap, "AVP(4) < AVP(24)");
  for (double alpha : {0.05, 0.1, 0.2}) {
    const auto plain = pck(ds.instances, ds.predictions, kpc, alpha);
    const auto lr = left_right_pck(ds.instances, ds.predictions, kpc, ds.manifest.symmetry(), alpha);
    o.require(*lr.pooled >= *plain.pooled, "left/right PCK < PCK");
  }

  // Azimuth-only perturbation of the detections.
  std::vector<Detection> dets = ds.detections;
  std::mt19937_64 rng(6007);
  std::normal_distribution<double> n(0.0, 0.4);
  for (std::size_t i = 0; i < ds.detections.size(); ++i) {
    const auto& v = *dets[i].viewpoint;
    dets[i].viewpoint = EulerAngles(v.azimuth() + n(rng), v.elevation(), v.cyclorotation());
  }
  for (double theta : {kPi / 12, kPi / 6, kPi / 3}) {
    const auto arp = arp_theta(dets, ds.instances, theta);
    const auto avpt = avp_theta(dets, ds.instances, theta);
    for (std::size_t c = 0; c < arp.size(); ++c) o.require(arp[c].ap <= avpt[c].ap + 1e-12, "ARP_theta > AVP_theta");
  }
  o.note("n=2000: PCK(alpha), Acc(theta) monotone; AVP4 >= AVP24; LR-PCK >= PCK; ARP <= AVP_theta");
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome determinism() {
  Outcome o;
  const fs::path a = g_work / "det_a", b = g_work / "det_b";
  for (const auto& p : {a, b}) fs::remove_all(p);
  const std::string synth = "synth --seed 77 --n 300 --noise default --out ";
  o.require(run_cli(synth + a.string()) == 0 && run_cli(synth + b.string()) == 0, "synth failed");
  o.require(same_tree(a, b), "datasets differ across runs");

  const fs::path f1 = g_work / "det_f1", f4 = g_work / "det_f4";
  o.require(run_cli("fuse --dataset " + a.string() + " --threads 1 --out " + f1.string()) == 0 &&
                run_cli("fuse --dataset " + a.string() + " --threads 4 --out " + f4.string()) == 0,
            "fuse failed");
  o.require(same_tree(f1, f4), "fused predictions differ across thread counts");

  std::size_t reports = 0;
  for (const std::string cmd : {"evaluate-viewpoint --gt-boxes", "evaluate-viewpoint --detections",
                                "evaluate-keypoints --mode pck", "evaluate-keypoints --mode apk",
                                "diagnose --slices size,occlusion --error-modes --left-right"}) {
    for (const char* fmt_name : {"json", "table"}) {
      const fs::path r1 = g_work / "r1", r4 = g_work / "r4";
      const std::string base = cmd + " --dataset " + a.string() + " --format " + fmt_name;
      o.require(run_cli(base + " --preds " + f1.string() + " --threads 1 --report " + r1.string()) == 0 &&
                    run_cli(base + " --preds " + f4.string() + " --threads 4 --report " + r4.string()) == 0,
                cmd + " failed");
      o.require(slurp(r1) == slurp(r4) && !slurp(r1).empty(), cmd + " report differs");
      ++reports;
    }
  }
  o.note("datasets, fused outputs and " + std::to_string(reports) + " reports byte-identical (threads 1 vs 4)");
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome fusion_gain() {
  Outcome o;
  const Dataset ds = synth::generate_scene(8008, 1000, synth::NoiseProfile::parse("lateral"));
  FuseConfig with, without;
  without.fusion.use_prior = false;
  Dataset fused = ds, plain = ds;
  fused.predictions = fuse_dataset(ds, with).predictions;
  plain.predictions = fuse_dataset(ds, without).predictions;
  const auto kpc = ds.manifest.keypoints_per_class();
  const auto pf = pck(fused.instances, fused.predictions, kpc, 0.1);
  const auto pa = pck(plain.instances, plain.predictions, kpc, 0.1);
  const double gain = 100.0 * (*pf.mean_over_classes - *pa.mean_over_classes);
  const double gain_pooled = 100.0 * (*pf.pooled - *pa.pooled);
  o.require(gain >= 10.0, "gain " + fmt("%.1f points", gain));
  o.note("PCK fused " + fmt("%.3f", *pf.mean_over_classes) + " vs appearance-only " +
         fmt("%.3f", *pa.mean_over_classes) + " (+" + fmt("%.1f", gain) + " points; pooled +" +
         fmt("%.1f", gain_pooled) + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <vkp-cli> [--only N]\n");
    return 2;
  }
  std::size_t only = 0;
  if (argc == 4 && std::string(argv[2]) == "--only") only = std::stoul(argv[3]);
  g_cli = fs::absolute(argv[1]);
  g_work = fs::temp_directory_path() / ("vkp_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"SO(3) geodesic, metric axioms, euler roundtrip", so3_suite},
      {"pose prior and fused decode vs oracles", fusion_oracles},
      {"AP and AVP family vs oracles and hand traces", metric_oracles},
      {"noiseless end-to-end pipeline", noiseless_end_to_end},
      {"statistical closed forms", statistical},
      {"monotonicity and ordering", monotonicity},
      {"determinism across runs and threads", determinism},
      {"viewpoint-conditioned fusion gain", fusion_gain},
  };
  int failures = 0;
  std::size_t ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != i + 1) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %zu: %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(g_work);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failures, ran);
  if (ran == 0) return 2;
  return failures == 0 ? 0 : 1;
}
