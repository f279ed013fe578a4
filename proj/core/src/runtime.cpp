#include "ramp/runtime.hpp"

#include "ramp/error.hpp"

namespace ramp::runtime {

void MemoryTranscript::write(const nlohmann::json& record) {
  std::lock_guard lock(mu_);
  records_.push_back(record);
}

std::vector<nlohmann::json> MemoryTranscript::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

void MemoryTranscript::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
}

FileTranscript::FileTranscript(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw ConfigError("cannot open transcript file '" + path + "'");
}

void FileTranscript::write(const nlohmann::json& record) {
  std::lock_guard lock(mu_);
  out_ << record.dump() << '\n';
  out_.flush();
}

AclMessage reply_to(const AclMessage& incoming, protocol::Performative performative, protocol::Content content) {
  AclMessage m;
  m.performative = performative;
  m.receiver = incoming.sender;
  m.conversation_id = incoming.conversation_id;
  m.in_reply_to = incoming.message_id;
  m.content = std::move(content);
  return m;
}

AclMessage make_message(protocol::Performative performative, std::string receiver, std::string conversation_id,
                        protocol::Content content) {
  AclMessage m;
  m.performative = performative;
  m.receiver = std::move(receiver);
  m.conversation_id = std::move(conversation_id);
  m.content = std::move(content);
  return m;
}

}  // namespace ramp::runtime
