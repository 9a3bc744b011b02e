#include "steer/learn/rollout.hpp"

namespace steer::learn {

Rollout::Rollout(const teach::SimSetup& setup)
    : setup_(setup), world_(setup.track, setup.world), history_(setup.make_history()) {
  restart_history();
}

void Rollout::restart_history() {
  history_.clear();
  history_.push(sim::render(world_, setup_.frame));
  current_ = history_.observation();
}

Rollout::Step Rollout::step(sim::Action a) {
  const sim::StepResult r = world_.step(a);
  Step out;
  out.events = r.events;
  out.terminal = r.events.restarted();
  if (out.terminal) {
    history_.push(sim::render(world_.track(), r.terminal, setup_.frame));
    out.next = history_.observation();
    restart_history();
  } else {
    history_.push(sim::render(world_, setup_.frame));
    current_ = history_.observation();
    out.next = current_;
  }
  return out;
}

void Rollout::restart() {
  world_.reset();
  restart_history();
}

}  // namespace steer::learn
