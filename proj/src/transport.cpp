#include "h2dist/transport.hpp"

#include <string>

namespace h2dist {

const char* to_string(Tag tag) {
  switch (tag) {
    case Tag::roots: return "roots";
    case Tag::children: return "children";
    case Tag::xhat: return "xhat";
    case Tag::xleaf: return "xleaf";
    case Tag::geometry: return "geometry";
    case Tag::vote: return "vote";
    case Tag::eta: return "eta";
    case Tag::coefficients: return "coefficients";
    case Tag::yhat: return "yhat";
    case Tag::relay: return "relay";
    case Tag::shareholders: return "shareholders";
  }
  return "unknown";
}

void TrafficCensus::record(Tag tag, std::size_t bytes) {
  auto& c = sent[tag];
  ++c.messages;
  c.bytes += bytes;
}

TrafficCount TrafficCensus::of(Tag tag) const {
  auto it = sent.find(tag);
  return it == sent.end() ? TrafficCount{} : it->second;
}

TrafficCount TrafficCensus::total() const {
  TrafficCount t;
  for (const auto& [tag, c] : sent) {
    t.messages += c.messages;
    t.bytes += c.bytes;
  }
  return t;
}

nlohmann::json TrafficCensus::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [tag, c] : sent) j[to_string(tag)] = {{"messages", c.messages}, {"bytes", c.bytes}};
  return j;
}

Network::Network(int nodes, std::chrono::milliseconds timeout) : timeout_(timeout) {
  if (nodes < 1) throw std::invalid_argument("Network: need at least one node");
  boxes_.reserve(nodes);
  for (int i = 0; i < nodes; ++i) boxes_.push_back(std::make_unique<Mailbox>());
}

void Network::post(Rank src, Rank dst, Tag tag, Bytes payload) {
  auto& box = *boxes_.at(dst);
  {
    std::lock_guard<std::mutex> lock(box.mu);
    box.queues[{src, tag}].push_back(std::move(payload));
  }
  box.cv.notify_all();
}

Bytes Network::take(Rank src, Rank dst, Tag tag) {
  auto& box = *boxes_.at(dst);
  std::unique_lock<std::mutex> lock(box.mu);
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  auto& queue = box.queues[{src, tag}];
  while (queue.empty()) {
    if (aborted()) {
      std::lock_guard<std::mutex> state(state_mu_);
      throw ProtocolError("node " + std::to_string(dst) + ": network aborted (" + reason_ + ")");
    }
    if (box.cv.wait_until(lock, deadline) == std::cv_status::timeout && queue.empty()) {
      lock.unlock();
      const std::string what = "node " + std::to_string(dst) + ": timed out waiting for '" + to_string(tag) +
                               "' from node " + std::to_string(src);
      abort(what);
      throw ProtocolError(what);
    }
  }
  Bytes payload = std::move(queue.front());
  queue.pop_front();
  return payload;
}

void Network::abort(const std::string& reason) {
  {
    std::lock_guard<std::mutex> lock(state_mu_);
    if (aborted_) return;
    aborted_ = true;
    reason_ = reason;
  }
  for (auto& box : boxes_) {
    std::lock_guard<std::mutex> lock(box->mu);
    box->cv.notify_all();
  }
}

bool Network::aborted() const {
  std::lock_guard<std::mutex> lock(state_mu_);
  return aborted_;
}

void Transport::check_peer(Rank peer) const {
  if (peer < 0 || peer >= size()) {
    throw ProtocolError("node " + std::to_string(rank_) + ": invalid peer " + std::to_string(peer));
  }
}

void Transport::send(Rank dst, Tag tag, Bytes payload) {
  check_peer(dst);
  if (dst != rank_) census_.record(tag, payload.size());
  network_->post(rank_, dst, tag, std::move(payload));
}

Bytes Transport::recv(Rank src, Tag tag) {
  check_peer(src);
  return network_->take(src, rank_, tag);
}

Bytes Transport::broadcast(Rank root, Tag tag, Bytes payload) {
  check_peer(root);
  if (rank_ == root) {
    for (Rank r = 0; r < size(); ++r) {
      if (r != root) send(r, tag, payload);
    }
    return payload;
  }
  return recv(root, tag);
}

std::vector<Bytes> Transport::all_to_all(Tag tag, std::vector<Bytes> outgoing) {
  if (static_cast<int>(outgoing.size()) != size()) {
    throw ProtocolError("all_to_all: need one payload per node, got " + std::to_string(outgoing.size()));
  }
  std::vector<Bytes> incoming(size());
  for (Rank r = 0; r < size(); ++r) {
    if (r == rank_) {
      incoming[r] = std::move(outgoing[r]);
    } else {
      send(r, tag, std::move(outgoing[r]));
    }
  }
  for (Rank r = 0; r < size(); ++r) {
    if (r != rank_) incoming[r] = recv(r, tag);
  }
  return incoming;
}

bool Transport::reduce_or(bool value) {
  Bytes mine{static_cast<std::uint8_t>(value ? 1 : 0)};
  if (rank_ != 0) {
    send(0, Tag::vote, std::move(mine));
    Bytes result = recv(0, Tag::vote);
    if (result.size() != 1) throw ProtocolError("reduce_or: malformed result");
    return result[0] != 0;
  }
  bool any = value;
  for (Rank r = 1; r < size(); ++r) {
    Bytes v = recv(r, Tag::vote);
    if (v.size() != 1) throw ProtocolError("reduce_or: malformed vote");
    any = any || v[0] != 0;
  }
  for (Rank r = 1; r < size(); ++r) send(r, Tag::vote, Bytes{static_cast<std::uint8_t>(any ? 1 : 0)});
  return any;
}

}  // namespace h2dist
