#include "orchestra/ports.hpp"

#include <future>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

void join_all(std::vector<std::thread>& threads) {
  for (auto& t : threads) {
    if (!t.joinable()) continue;
    if (t.get_id() == std::this_thread::get_id())
      t.detach();
    else
      t.join();
  }
  threads.clear();
}

// Best effort: the id of a line that failed to decode, so the fault can be matched.
std::string salvage_id(const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    if (j.is_object())
      if (auto it = j.find("id"); it != j.end() && it->is_string()) return it->get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return {};
}

}  // namespace

// ---------------------------------------------------------------- FrameClient

FrameClient::FrameClient(Network net, Location target) : net_(std::move(net)), target_(std::move(target)) {}

FrameClient::~FrameClient() {
  close();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(mu_);
    readers.swap(readers_);
  }
  join_all(readers);
}

std::string FrameClient::send(Frame f, Callback on_reply) {
  std::unique_lock lock(mu_);
  if (closed_) throw IoError("client closed");
  for (int attempt = 0;; ++attempt) {
    bool fresh = false;
    if (!conn_) {
      conn_ = net_.connect(target_);
      readers_.emplace_back(&FrameClient::read_loop, this, conn_);
      fresh = true;
    }
    f.id = std::to_string(next_id_++);
    std::string line = encode_frame(f);
    auto conn = conn_;
    if (on_reply) pending_[f.id] = {conn, f.operation, f.resource, on_reply};
    try {
      conn->write_line(line);
      return f.id;
    } catch (const IoError&) {
      pending_.erase(f.id);
      conn->close();
      if (conn_ == conn) conn_.reset();
      // A reused connection may have died quietly; one fresh attempt is safe
      // because nothing was delivered.
      if (fresh || attempt > 0) throw;
    }
  }
}

Frame FrameClient::call(Frame f, std::chrono::milliseconds timeout) {
  auto promise = std::make_shared<std::promise<Frame>>();
  auto done = std::make_shared<std::atomic<bool>>(false);
  auto future = promise->get_future();
  std::string op = f.operation, resource = f.resource;
  std::string id;
  try {
    id = send(std::move(f), [promise, done](const Frame& reply) {
      if (!done->exchange(true)) promise->set_value(reply);
    });
  } catch (const IoError&) {
    return Frame::failure("", op, faults::kIoFault, resource);
  }
  if (future.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(mu_);
    pending_.erase(id);
    return Frame::failure(id, op, faults::kIoFault, resource);
  }
  return future.get();
}

void FrameClient::read_loop(std::shared_ptr<Connection> conn) {
  try {
    while (auto line = conn->read_line()) {
      Frame f;
      try {
        f = decode_frame(*line);
      } catch (const DecodeError&) {
        continue;
      }
      if (f.type == Frame::Type::Request) continue;
      Callback cb;
      {
        std::lock_guard lock(mu_);
        auto it = pending_.find(f.id);
        if (it == pending_.end() || it->second.conn != conn) continue;
        cb = std::move(it->second.cb);
        pending_.erase(it);
      }
      cb(f);
    }
  } catch (const IoError&) {
  }
  std::vector<std::pair<std::string, Pending>> orphans;
  {
    std::lock_guard lock(mu_);
    if (conn_ == conn) conn_.reset();
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (it->second.conn == conn) {
        orphans.emplace_back(it->first, std::move(it->second));
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
  }
  conn->close();
  for (auto& [id, p] : orphans) p.cb(Frame::failure(id, p.op, faults::kIoFault, p.resource));
}

void FrameClient::close() {
  std::shared_ptr<Connection> c;
  {
    std::lock_guard lock(mu_);
    closed_ = true;
    c = std::move(conn_);
  }
  if (c) c->close();
}

// ---------------------------------------------------------------- OutputPort

OutputPort::OutputPort(std::string name, Location target, Interface ops, std::string resource, Network net)
    : name_(std::move(name)), ops_(std::move(ops)), resource_(std::move(resource)), client_(std::move(net), std::move(target)) {}

const OperationDecl& OutputPort::check(const std::string& op, OperationKind kind, const State& payload) const {
  const OperationDecl* d = ops_.find(op);
  if (!d || d->kind != kind)
    throw Fault(faults::kUnknownOperation, "port '" + name_ + "' has no " + to_string(kind) + " '" + op + "'");
  if (auto why = d->request.mismatch(payload); !why.empty())
    throw Fault(faults::kTypeFault, op + ": " + why);
  return *d;
}

void OutputPort::notify(const std::string& op, const State& payload) {
  check(op, OperationKind::Notification, payload);
  try {
    client_.send(Frame::request("", op, payload, resource_), {});
  } catch (const IoError& e) {
    throw Fault(faults::kIoFault, e.what());
  } catch (const EncodeError& e) {
    throw Fault(faults::kTypeFault, e.what());
  }
}

std::shared_ptr<SolicitTicket> OutputPort::solicit(const std::string& op, const State& payload,
                                                   std::function<void()> wake) {
  const OperationDecl& d = check(op, OperationKind::SolicitResponse, payload);
  auto ticket = std::make_shared<SolicitTicket>(std::move(wake));
  MessageType response = d.response;
  try {
    client_.send(Frame::request("", op, payload, resource_), [ticket, response](const Frame& f) {
      if (f.type == Frame::Type::Fault)
        ticket->fail(f.fault);
      else if (!response.conforms(f.payload))
        ticket->fail(faults::kTypeFault);
      else
        ticket->complete(f.payload);
    });
  } catch (const IoError&) {
    ticket->fail(faults::kIoFault);
  } catch (const EncodeError& e) {
    throw Fault(faults::kTypeFault, e.what());
  }
  return ticket;
}

// ---------------------------------------------------------------- ServerChannel

void ServerChannel::track(const Frame& request) {
  std::lock_guard lock(mu_);
  open_[request.id] = {request.operation, request.resource};
}

void ServerChannel::forget(const std::string& request_id) {
  std::lock_guard lock(mu_);
  open_.erase(request_id);
}

void ServerChannel::send_response(const std::string& request_id, const State& payload) {
  std::pair<std::string, std::string> what;
  {
    std::lock_guard lock(mu_);
    auto it = open_.find(request_id);
    if (it == open_.end()) return;
    what = std::move(it->second);
    open_.erase(it);
  }
  try {
    conn_->write_line(encode_frame(Frame::response(request_id, what.first, payload, what.second)));
  } catch (const EncodeError&) {
    send(Frame::failure(request_id, what.first, faults::kTypeFault, what.second));
  } catch (const IoError&) {
  }
}

void ServerChannel::send_fault(const std::string& request_id, const std::string& fault) {
  std::pair<std::string, std::string> what;
  {
    std::lock_guard lock(mu_);
    auto it = open_.find(request_id);
    if (it == open_.end()) return;
    what = std::move(it->second);
    open_.erase(it);
  }
  send(Frame::failure(request_id, what.first, fault, what.second));
}

void ServerChannel::send(const Frame& f) {
  try {
    conn_->write_line(encode_frame(f));
  } catch (const Error&) {
  }
}

// ---------------------------------------------------------------- InputPort

InputPort::InputPort(std::string name, Location where, Network net, FrameHandler handler)
    : name_(std::move(name)), where_(std::move(where)), net_(std::move(net)), handler_(std::move(handler)) {}

InputPort::~InputPort() { stop(); }

void InputPort::start() {
  listener_ = net_.listen(where_);
  acceptor_ = std::thread(&InputPort::accept_loop, this);
}

Location InputPort::location() const { return listener_ ? listener_->location() : where_; }

void InputPort::accept_loop() {
  while (auto conn = listener_->accept()) {
    std::lock_guard lock(mu_);
    if (stopping_) {
      conn->close();
      break;
    }
    conns_.push_back(conn);
    threads_.emplace_back(&InputPort::read_loop, this, conn);
  }
}

void InputPort::read_loop(std::shared_ptr<Connection> conn) {
  auto ch = std::make_shared<ServerChannel>(conn);
  try {
    while (auto line = conn->read_line()) {
      Frame f;
      try {
        f = decode_frame(*line);
      } catch (const DecodeError&) {
        ch->send(Frame::failure(salvage_id(*line), "", faults::kProtocolFault));
        continue;
      }
      if (f.type != Frame::Type::Request) {
        ch->send(Frame::failure(f.id, f.operation, faults::kProtocolFault, f.resource));
        continue;
      }
      ch->track(f);
      try {
        handler_(f, ch);
      } catch (const Fault& fault) {
        ch->send_fault(f.id, fault.name());
      } catch (const std::exception&) {
        ch->send_fault(f.id, faults::kProtocolFault);
      }
    }
  } catch (const IoError&) {
  }
  conn->close();
}

void InputPort::stop() {
  if (stopping_.exchange(true)) return;
  if (listener_) listener_->close();
  if (acceptor_.joinable()) {
    if (acceptor_.get_id() == std::this_thread::get_id())
      acceptor_.detach();
    else
      acceptor_.join();
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) c->close();
    conns_.clear();
    threads.swap(threads_);
  }
  join_all(threads);
}

}  // namespace orchestra
