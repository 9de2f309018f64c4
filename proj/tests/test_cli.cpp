// Integration tests driving the installed binary; LAS_CLI points at the
// built executable (set by CMake through the test environment).

#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "las/frontend.hpp"
#include "testutil.hpp"

namespace {

std::string cli_path() {
  const char* p = std::getenv("LAS_CLI");
  REQUIRE_MESSAGE(p != nullptr, "LAS_CLI not set");
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto out_file = dir / ("las_cli_out_" + std::to_string(::getpid()) + ".txt");
  const std::string cmd = cli_path() + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(out_file);
  r.out.assign((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::filesystem::remove(out_file);
  return r;
}

}  // namespace

TEST_CASE("cli: unknown subcommand exits 2 with usage") {
  const auto r = run_cli("frobnicate");
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("Usage") != std::string::npos);
}

TEST_CASE("cli: --help exits 0 on every subcommand") {
  for (const char* sub : {"", "features", "augment", "bpe-learn", "bpe-apply", "train", "mwer-train",
                          "ngram-build", "nnlm-train", "decode", "rescore", "wer"}) {
    const auto r = run_cli(std::string(sub) + " --help");
    CAPTURE(sub);
    CHECK(r.exit_code == 0);
  }
}

TEST_CASE("cli: wer on identical files prints WER 0.00%") {
  const auto dir = lastest::test_tmpdir("cliwer");
  {
    std::ofstream os(dir / "ref.txt");
    os << "hello world\nthe cat sat\n";
  }
  const auto r = run_cli("wer --ref " + (dir / "ref.txt").string() + " --hyp " + (dir / "ref.txt").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("WER 0.00%") != std::string::npos);

  // mismatched line counts is a runtime error -> exit 1
  {
    std::ofstream os(dir / "short.txt");
    os << "hello world\n";
  }
  const auto bad = run_cli("wer --ref " + (dir / "ref.txt").string() + " --hyp " + (dir / "short.txt").string());
  CHECK(bad.exit_code == 1);
}

TEST_CASE("cli: augment produces round(N/factor) samples") {
  const auto dir = lastest::test_tmpdir("cliaug");
  las::Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(1100, 0.25);
  las::write_wav(dir / "in.wav", w);
  const auto r =
      run_cli("augment --factor 1.1 " + (dir / "in.wav").string() + " " + (dir / "out.wav").string());
  CHECK(r.exit_code == 0);
  const las::Waveform out = las::read_wav(dir / "out.wav");
  CHECK(out.samples.size() == 1000);  // round(1100/1.1)
}

TEST_CASE("cli: bpe learn/apply round trip through files") {
  const auto dir = lastest::test_tmpdir("clibpe");
  {
    std::ofstream os(dir / "corpus.txt");
    os << "abc abd\nbcd abc\nabd bcd\n";
  }
  auto r = run_cli("bpe-learn --input " + (dir / "corpus.txt").string() + " --size 24 --out " +
                   (dir / "v.wpv").string());
  CHECK(r.exit_code == 0);
  r = run_cli("bpe-apply --vocab " + (dir / "v.wpv").string() + " --input " + (dir / "corpus.txt").string() +
              " --output " + (dir / "ids.txt").string() + " --ids");
  CHECK(r.exit_code == 0);
  r = run_cli("bpe-apply --vocab " + (dir / "v.wpv").string() + " --input " + (dir / "ids.txt").string() +
              " --output " + (dir / "back.txt").string() + " --decode");
  CHECK(r.exit_code == 0);
  std::ifstream back(dir / "back.txt");
  std::string line;
  std::getline(back, line);
  CHECK(line == "abc abd");
}

TEST_CASE("cli: config errors exit 1 with the key named") {
  const auto dir = lastest::test_tmpdir("clicfg");
  {
    std::ofstream os(dir / "bad.cfg");
    os << "label_smoothing = 2.0\n";
  }
  const auto r = run_cli("--config " + (dir / "bad.cfg").string() + " bpe-learn --input x --out y");
  CHECK(r.exit_code == 1);
  CHECK(r.out.find("label_smoothing") != std::string::npos);
}

TEST_CASE("cli: ngram-build writes a loadable ARPA file") {
  const auto dir = lastest::test_tmpdir("clingram");
  {
    std::ofstream os(dir / "corpus.txt");
    os << "a b a\nb a b\na a b\n";
  }
  const auto r = run_cli("ngram-build --input " + (dir / "corpus.txt").string() + " --order 2 --out " +
                         (dir / "lm.arpa").string());
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "lm.arpa"));
  std::ifstream is(dir / "lm.arpa");
  std::string first;
  std::getline(is, first);
  CHECK(first == "\\data\\");
}
