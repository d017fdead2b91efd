//! The annotation service over HTTP on a project directory.
//!
//!     cargo run -p grex --example annotation_server -- <project_dir> [port]
//!
//! Without a directory a synthetic project is generated in a temp dir.
//! Then, for example:
//!
//!     curl -X POST localhost:8080/api/v1/tasks -H 'content-type: application/json' \
//!          -d '{"image_ids":[1,2],"split":"train"}'
//!     curl localhost:8080/api/v1/annotation/next

use std::net::SocketAddr;

use grex::annotate::server::{bind, serve};
use grex::core::dataset::{generate_synthetic, Split, SyntheticConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir().unwrap();
    let dir = match args.next().filter(|d| !d.is_empty()) {
        Some(d) => d.into(),
        None => {
            let config = SyntheticConfig::default().with_quota(Split::Train, 4, 2, 0);
            generate_synthetic(&config, 3).unwrap().write(tmp.path()).unwrap();
            tmp.path().to_path_buf()
        }
    };
    let port: u16 = args.next().and_then(|p| p.parse().ok()).unwrap_or(8080);
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let (listener, state) = bind(&dir, SocketAddr::from(([127, 0, 0, 1], port))).await.unwrap();
        println!("project {} on http://{}/api/v1/ (ctrl-c to stop)", dir.display(), listener.local_addr().unwrap());
        serve(listener, state).await.unwrap();
    });
}
