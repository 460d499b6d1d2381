//! The JSON API over the mini corpus.
//!
//!     cargo run --example serve_api -- 8080
//!     curl -s localhost:8080/api/match -d '{"text":"audio keeps cutting off","k":3}'
//!     curl -s localhost:8080/api/stats

use std::net::SocketAddr;

use crowdmatch::embed::HashEmbedder;
use crowdmatch::fixtures;
use crowdmatch::matcher::Matcher;
use crowdmatch::service::{default_options, router, serve, ServiceConfig};

fn main() -> crowdmatch::Result<()> {
    env_logger::init();
    let port: u16 = std::env::args().nth(1).and_then(|p| p.parse().ok()).unwrap_or(8080);
    let dir = tempfile::tempdir()?;
    let ws = fixtures::mini_workspace(dir.path())?;
    fixtures::embed_all(&ws, &HashEmbedder::new(384)?)?;

    let matcher = Matcher::from_workspace(ws)?;
    let defaults = default_options(&matcher);
    let config = ServiceConfig {
        cors_origins: vec!["*".into()],
        static_dir: None,
    };
    let app = router(matcher, defaults, &config);
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    eprintln!("listening on http://{addr} (ctrl-c to stop)");
    tokio::runtime::Runtime::new()?.block_on(serve(addr, app))?;
    Ok(())
}
