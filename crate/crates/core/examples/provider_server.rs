//! Runs the FFT-backed provider server until a shutdown message arrives.
//! Point a simulation at it with `--provider external --provider-addr`.
//!
//! `cargo run --example provider_server -- 127.0.0.1:7878`

use std::sync::Arc;

use neuralmag::bridge::{FftHandler, Server};
use neuralmag::lattice::{GridSpec, MaterialParams};

fn main() -> neuralmag::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:7878".into());
    let server = Server::bind(&addr)?;
    println!("serving H_demag on {}", server.local_addr());
    let handler = FftHandler::new(GridSpec::film(1).cell_size_cm(), MaterialParams::default().ms);
    server.run(Arc::new(handler))
}
