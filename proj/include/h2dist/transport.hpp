#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2dist/types.hpp"

namespace h2dist {

using Bytes = std::vector<std::uint8_t>;

// Message kinds.  Receives name the kind they expect; a node only ever
// dequeues the oldest message of that kind from a given peer.
enum class Tag : std::uint32_t {
  roots = 1,
  children,
  xhat,
  xleaf,
  geometry,
  vote,
  eta,
  coefficients,
  yhat,
  relay,
  shareholders,
};

const char* to_string(Tag tag);

struct TrafficCount {
  std::size_t messages = 0;
  std::size_t bytes = 0;
  bool operator==(const TrafficCount&) const = default;
};

// Messages and payload bytes sent to other nodes, per tag.  Deliveries a node
// makes to itself are not traffic and are not counted.
struct TrafficCensus {
  std::map<Tag, TrafficCount> sent;

  void record(Tag tag, std::size_t bytes);
  TrafficCount of(Tag tag) const;
  TrafficCount total() const;
  nlohmann::json to_json() const;
  bool operator==(const TrafficCensus&) const = default;
};

// In-process message fabric for p logical nodes.  Every (source, destination,
// tag) triple is an unbounded FIFO queue, so sends never block.
class Network {
 public:
  explicit Network(int nodes, std::chrono::milliseconds timeout = std::chrono::seconds(120));

  int size() const { return static_cast<int>(boxes_.size()); }
  void post(Rank src, Rank dst, Tag tag, Bytes payload);
  // Blocks until a message arrives, the network is aborted, or the timeout expires.
  Bytes take(Rank src, Rank dst, Tag tag);
  void abort(const std::string& reason);
  bool aborted() const;

 private:
  struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::pair<Rank, Tag>, std::deque<Bytes>> queues;
  };
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex state_mu_;
  bool aborted_ = false;
  std::string reason_;
};

// One node's endpoint.  Collectives are built from point-to-point messages and
// must be entered by all nodes in the same order.
class Transport {
 public:
  Transport(Network& network, Rank rank) : network_(&network), rank_(rank) {}

  Rank rank() const { return rank_; }
  int size() const { return network_->size(); }

  void send(Rank dst, Tag tag, Bytes payload);
  Bytes recv(Rank src, Tag tag);

  // Every node returns the root's payload.
  Bytes broadcast(Rank root, Tag tag, Bytes payload);
  // outgoing[d] goes to node d; the result holds incoming[s] from node s.
  std::vector<Bytes> all_to_all(Tag tag, std::vector<Bytes> outgoing);
  bool reduce_or(bool value);

  const TrafficCensus& census() const { return census_; }

 private:
  void check_peer(Rank peer) const;

  Network* network_;
  Rank rank_;
  TrafficCensus census_;
};

// Runs fn(transport) on p threads, one per logical node, and returns the
// per-node results in rank order.  If any node throws, the network is aborted
// and the first failure is rethrown after all threads have joined.
template <class Fn>
auto run_nodes(int p, Fn&& fn, std::chrono::milliseconds timeout = std::chrono::seconds(120)) {
  using Result = std::invoke_result_t<Fn&, Transport&>;
  static_assert(!std::is_void_v<Result>, "run_nodes needs a value-returning node function");
  if (p < 1) throw std::invalid_argument("run_nodes: need at least one node");
  Network network(p, timeout);
  std::vector<std::optional<Result>> results(p);
  std::mutex failure_mu;
  std::exception_ptr first_failure;
  auto body = [&](Rank r) {
    Transport transport(network, r);
    try {
      results[r].emplace(fn(transport));
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!first_failure) first_failure = std::current_exception();
      network.abort("node " + std::to_string(r) + " failed: " + e.what());
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!first_failure) first_failure = std::current_exception();
      network.abort("node " + std::to_string(r) + " failed");
    }
  };
  if (p == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(p);
    for (Rank r = 0; r < p; ++r) threads.emplace_back(body, r);
    for (auto& t : threads) t.join();
  }
  if (first_failure) std::rethrow_exception(first_failure);
  for (auto& r : results) {
    if (!r) throw ProtocolError("run_nodes: a node finished without a result");
  }
  std::vector<Result> out;
  out.reserve(p);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace h2dist
