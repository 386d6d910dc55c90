//! A suppressor in another process (here: a thread on a socket pair)
//! speaking the AHS1 frame protocol, run inside the howling loop.

use std::os::unix::net::UnixStream;
use std::thread;

use howlsim::sim::source::synthetic_speech;
use howlsim::sim::{run_streaming, ScenarioConfig};
use howlsim::suppress::plugin::{serve, PeerMode, Transport};
use howlsim::suppress::{Passthrough, PluginConfig, PluginSuppressor};

fn peer(mode: PeerMode) -> PluginSuppressor {
    PluginSuppressor::from_factory(
        "loopback",
        PluginConfig::default(),
        Box::new(move || {
            let (host, peer) = UnixStream::pair()?;
            let peer_w = peer.try_clone()?;
            thread::spawn(move || serve(peer, peer_w, mode));
            Ok(Transport {
                reader: Box::new(host.try_clone()?),
                writer: Box::new(host),
                child: None,
            })
        }),
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::scalar_toy(synthetic_speech(3, 3.0, 16_000).scaled(0.1), 0.5, 1.0, 0.1);
    let local = run_streaming(&cfg, &mut Passthrough)?;
    let remote = run_streaming(&cfg, &mut peer(PeerMode::Echo))?;
    println!("echo peer == passthrough: {}", local.enhanced == remote.enhanced);

    match run_streaming(&cfg, &mut peer(PeerMode::Truncate(50))) {
        Ok(_) => println!("truncating peer unexpectedly survived"),
        Err(e) => println!("truncating peer: {e}"),
    }
    Ok(())
}
