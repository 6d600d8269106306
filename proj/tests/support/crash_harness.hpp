#pragma once

// Fork-based crash injection for the document store. Each round forks a child that runs a
// scripted batch of writes against a shared store directory and _exits at the k-th fault-hook
// call. The parent then reopens the store and checks every document is either the pre- or
// post-image of the interrupted operation.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "woundcare/crypto.hpp"
#include "woundcare/store.hpp"

namespace crash {

using woundcare::store::Json;

struct Op {
  enum Kind { put, update, create, blob } kind;
  std::string key;
  Json body;
  std::uint64_t expected = 0;
  std::string blob_text;
};

struct Expected {
  std::uint64_t version;
  Json body;
};

struct Report {
  std::size_t rounds = 0;
  std::size_t killed = 0;
  std::size_t torn = 0;
  std::size_t mismatched = 0;
  std::size_t in_flight_new = 0;
  std::size_t in_flight_old = 0;
  std::vector<std::string> problems;
};

inline Json random_body(std::mt19937& rng) {
  std::uniform_int_distribution<int> len(0, 300);
  std::string text(static_cast<std::size_t>(len(rng)), 'x');
  for (char& c : text) c = static_cast<char>('a' + rng() % 26);
  return Json{{"n", rng() % 100000}, {"text", text}, {"list", Json::array({rng() % 7, rng() % 11})}};
}

inline void execute(woundcare::store::Store& store, const Op& op) {
  switch (op.kind) {
    case Op::put: store.put("docs", op.key, op.body); break;
    case Op::update: store.atomic_update("docs", op.key, op.expected, op.body); break;
    case Op::create: store.create("docs", op.key, op.body); break;
    case Op::blob:
      store.put_blob(std::span(reinterpret_cast<const std::uint8_t*>(op.blob_text.data()), op.blob_text.size()),
                     "text/plain");
      break;
  }
}

/// Runs `rounds` kill points against a store rooted at `dir`.
inline Report run(const std::filesystem::path& dir, std::size_t rounds, std::uint32_t seed) {
  namespace fs = std::filesystem;
  fs::remove_all(dir);
  std::mt19937 rng(seed);
  std::map<std::string, Expected> model;
  std::map<std::string, std::string> blobs;  // key -> content
  Report report;
  const std::vector<std::string> keys = {"alpha", "beta", "gamma/1", "gamma/2", "delta eps", "zeta"};

  for (std::size_t round = 0; round < rounds; ++round) {
    std::vector<Op> ops;
    std::map<std::string, std::uint64_t> planned;
    for (const auto& [k, e] : model) planned[k] = e.version;
    const int n_ops = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n_ops; ++i) {
      Op op;
      const std::string& key = keys[rng() % keys.size()];
      op.key = key;
      op.body = random_body(rng);
      const int pick = static_cast<int>(rng() % 4);
      if (pick == 3) {
        op.kind = Op::blob;
        op.blob_text = "blob-" + std::to_string(rng() % 50) + std::string(rng() % 200, 'b');
      } else if (!planned.count(key)) {
        op.kind = Op::create;
        planned[key] = 1;
      } else if (pick == 0) {
        op.kind = Op::update;
        op.expected = planned[key];
        planned[key] += 1;
      } else {
        op.kind = Op::put;
        planned[key] += 1;
      }
      ops.push_back(std::move(op));
    }
    const std::size_t chunk = 1 + rng() % 64;
    // Dry run on a scratch copy to learn how many fault points this batch has.
    const fs::path scratch = dir.string() + ".dry";
    fs::remove_all(scratch);
    if (fs::exists(dir)) fs::copy(dir, scratch, fs::copy_options::recursive);
    int total_calls = 0;
    {
      woundcare::store::StoreOptions opt;
      opt.write_chunk = chunk;
      opt.fsync = false;
      opt.fault_hook = [&](woundcare::store::WriteStage) { ++total_calls; };
      woundcare::store::Store dry(scratch, opt);
      for (const Op& op : ops) execute(dry, op);
    }
    fs::remove_all(scratch);
    const int kill_at = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::max(total_calls, 1)));

    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      ::close(fds[0]);
      int calls = 0;
      woundcare::store::StoreOptions opt;
      opt.write_chunk = chunk;
      opt.fault_hook = [&](woundcare::store::WriteStage) {
        if (++calls == kill_at) ::_exit(42);
      };
      auto say = [&](char tag, std::size_t i) {
        char buf[32];
        const int n = std::snprintf(buf, sizeof buf, "%c %zu\n", tag, i);
        if (::write(fds[1], buf, static_cast<std::size_t>(n)) != n) ::_exit(3);
      };
      try {
        woundcare::store::Store store(dir, opt);
        for (std::size_t i = 0; i < ops.size(); ++i) {
          say('B', i);
          execute(store, ops[i]);
          say('D', i);
        }
      } catch (...) {
        ::_exit(2);
      }
      ::_exit(0);
    }
    ::close(fds[1]);
    std::string log;
    char buf[256];
    for (ssize_t n; (n = ::read(fds[0], buf, sizeof buf)) > 0;) log.append(buf, static_cast<std::size_t>(n));
    ::close(fds[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    ++report.rounds;
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code == 42) ++report.killed;
    if (code != 0 && code != 42) {
      report.problems.push_back("round " + std::to_string(round) + ": child exited with " + std::to_string(code));
      continue;
    }

    std::istringstream in(log);
    char tag;
    std::size_t idx;
    std::vector<bool> done(ops.size(), false);
    std::optional<std::size_t> in_flight;
    while (in >> tag >> idx) {
      if (tag == 'B') in_flight = idx;
      if (tag == 'D') {
        done[idx] = true;
        in_flight.reset();
      }
    }

    auto apply = [&](const Op& op) {
      if (op.kind == Op::blob) {
        blobs[woundcare::crypto::sha256_hex(op.blob_text)] = op.blob_text;
        return;
      }
      auto it = model.find(op.key);
      const std::uint64_t v = it == model.end() ? 1 : it->second.version + 1;
      model[op.key] = {v, op.body};
    };
    for (std::size_t i = 0; i < ops.size(); ++i)
      if (done[i]) apply(ops[i]);

    woundcare::store::Store reopened(dir);
    // No temp leftovers survive reopen and every document parses.
    std::map<std::string, woundcare::store::Document> seen;
    try {
      for (auto& d : reopened.list("docs")) seen[d.key] = d;
    } catch (const std::exception& e) {
      ++report.torn;
      report.problems.push_back("round " + std::to_string(round) + ": " + e.what());
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.path().filename().string().find(".tmp.") != std::string::npos) {
        report.problems.push_back("temp file survived reopen: " + entry.path().string());
      }
    }

    const Op* flying = in_flight ? &ops[*in_flight] : nullptr;
    if (flying && flying->kind != Op::blob) {
      const auto old_it = model.find(flying->key);
      const auto got = seen.find(flying->key);
      std::optional<Expected> old_state;
      if (old_it != model.end()) old_state = old_it->second;
      const Expected new_state{old_state ? old_state->version + 1 : 1, flying->body};
      if (got != seen.end() && got->second.version == new_state.version && got->second.body == new_state.body) {
        model[flying->key] = new_state;
        ++report.in_flight_new;
      } else if ((!old_state && got == seen.end()) ||
                 (old_state && got != seen.end() && got->second.version == old_state->version &&
                  got->second.body == old_state->body)) {
        ++report.in_flight_old;
      } else {
        ++report.torn;
        report.problems.push_back("round " + std::to_string(round) + ": in-flight key " + flying->key +
                                  " is neither old nor new");
        if (got != seen.end()) model[flying->key] = {got->second.version, got->second.body};
      }
    } else if (flying) {
      const std::string k = woundcare::crypto::sha256_hex(flying->blob_text);
      if (reopened.has_blob(k)) blobs[k] = flying->blob_text;
    }

    for (const auto& [key, want] : model) {
      const auto got = seen.find(key);
      if (got == seen.end() || got->second.version != want.version || got->second.body != want.body) {
        ++report.mismatched;
        report.problems.push_back("round " + std::to_string(round) + ": " + key + " diverged");
        if (got != seen.end()) model[key] = {got->second.version, got->second.body};
      }
    }
    if (seen.size() != model.size()) {
      ++report.mismatched;
      report.problems.push_back("round " + std::to_string(round) + ": unexpected documents present");
    }
    for (const auto& entry : fs::directory_iterator(dir / "blobs")) {
      const std::string name = entry.path().filename().string();
      if (name.size() != 64) continue;
      const auto bytes = reopened.get_blob(name).bytes;
      if (woundcare::crypto::sha256_hex(bytes) != name) {
        ++report.torn;
        report.problems.push_back("round " + std::to_string(round) + ": torn blob " + name);
      }
    }
    for (const auto& [k, text] : blobs) {
      if (!reopened.has_blob(k)) {
        ++report.mismatched;
        report.problems.push_back("round " + std::to_string(round) + ": committed blob missing");
      }
    }
  }
  return report;
}

}  // namespace crash
