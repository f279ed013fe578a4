#pragma once

#include "ramp/protocol.hpp"
#include "ramp/time.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace ramp::runtime {

using protocol::AclMessage;
using TimerId = std::uint64_t;

/// Append-only sink for JSON-lines transcript records.
class TranscriptSink {
 public:
  virtual ~TranscriptSink() = default;
  virtual void write(const nlohmann::json& record) = 0;
};

class MemoryTranscript final : public TranscriptSink {
 public:
  void write(const nlohmann::json& record) override;
  std::vector<nlohmann::json> records() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> records_;
};

class FileTranscript final : public TranscriptSink {
 public:
  explicit FileTranscript(const std::string& path);
  void write(const nlohmann::json& record) override;

 private:
  std::mutex mu_;
  std::ofstream out_;
};

/// Fans one record out to several sinks.
class TeeTranscript final : public TranscriptSink {
 public:
  void add(std::shared_ptr<TranscriptSink> sink) { sinks_.push_back(std::move(sink)); }
  void write(const nlohmann::json& record) override {
    for (auto& s : sinks_) s->write(record);
  }

 private:
  std::vector<std::shared_ptr<TranscriptSink>> sinks_;
};

/// What an agent can do from inside its event loop.
class Context {
 public:
  virtual ~Context() = default;
  virtual Timestamp now() const = 0;
  virtual const std::string& self() const = 0;
  /// Fills sender, message_id and sent_at, then sends. Returns the message id.
  virtual std::string send(AclMessage msg) = 0;
  virtual TimerId set_timer(Millis delay, std::string tag) = 0;
  virtual void cancel_timer(TimerId id) = 0;
  /// Adds a transcript record; the runtime stamps time and agent id.
  virtual void record(nlohmann::json event) = 0;
};

/// An event-driven participant. All callbacks for one agent run serially.
class Agent {
 public:
  explicit Agent(std::string id) : id_(std::move(id)) {}
  virtual ~Agent() = default;
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const std::string& id() const { return id_; }

  virtual void on_start(Context&) {}
  virtual void on_message(const AclMessage& msg, Context& ctx) = 0;
  virtual void on_timer(TimerId, const std::string& /*tag*/, Context&) {}
  /// The transport could not hand `msg` to its receiver.
  virtual void on_undeliverable(const AclMessage& /*msg*/, Context&) {}

 private:
  std::string id_;
};

/// Builds a reply on the same conversation.
AclMessage reply_to(const AclMessage& incoming, protocol::Performative performative, protocol::Content content);
/// Builds the first message of a conversation.
AclMessage make_message(protocol::Performative performative, std::string receiver, std::string conversation_id,
                        protocol::Content content);

}  // namespace ramp::runtime
