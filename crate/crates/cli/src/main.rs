//! `vkg`: batch pipeline over a store directory.
//!
//! Exit codes: 0 success, 1 usage, 2 data (parse/validate), 3 I/O.

mod store;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vkg_core::catalog::statistics;
use vkg_core::export::{build_manifest, export, ExportPayload, ExportRequest};
use vkg_core::ingest::{
    bridge_local_labels, load_attributes, map_to_triples, read_dataset, DatasetDescriptor, LoadError, SourceFormat,
    TaskKind,
};
use vkg_core::rdf::load_ntriples;
use vkg_core::sparql::{evaluate, parse_query, QueryError, Solutions};
use vkg_core::taxonomy::{apply_taxonomy, materialize, TaxonomyTable};
use vkg_core::TripleSource;
use vkg_server::{Service, ServiceConfig};

use store::StoreDir;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Io(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "vkg", version, about = "Visual dataset knowledge graph pipeline")]
struct Cli {
    /// Store directory (asserted.nt, inferred.nt, meta.json).
    #[arg(long, global = true, value_name = "DIR")]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a source dataset and add its triples.
    Ingest(IngestArgs),
    /// Load a taxonomy table and apply its axioms and alignments.
    Taxonomy {
        #[arg(long)]
        file: PathBuf,
    },
    /// Materialize subclass closure and label lifting.
    Enrich,
    /// Evaluate a SELECT query.
    Query(QueryArgs),
    /// Write a composite dataset for an export request.
    Export {
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print catalog statistics as JSON.
    Stats,
    /// Write the store as N-Triples.
    Dump {
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave out inferred triples.
        #[arg(long)]
        asserted_only: bool,
    },
    /// Add N-Triples files to the store.
    Load {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Mark loaded triples as inferred.
        #[arg(long)]
        inferred: bool,
    },
    /// Serve the HTTP API. SIGHUP reloads the store directory.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    format: SourceFormat,
    #[arg(long)]
    name: String,
    #[arg(long)]
    slug: String,
    #[arg(long)]
    license: Option<String>,
    #[arg(long)]
    source_url: Option<String>,
    /// Attribute sidecar JSON (`{localId: {weather, timeOfDay, illumination}}`).
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Supported tasks; defaults to detection, or classification for `cls`.
    #[arg(long = "task")]
    tasks: Vec<TaskKind>,
    /// Base IRI for minted resources (also `VKG_BASE_IRI`).
    #[arg(long)]
    base: Option<String>,
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct QuerySource {
    /// Query file.
    #[arg(short = 'f', long = "file")]
    file: Option<PathBuf>,
    /// Query text.
    #[arg(short = 'e', long = "expr")]
    expr: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    source: QuerySource,
    /// SPARQL JSON results.
    #[arg(long, conflicts_with = "table")]
    json: bool,
    /// Aligned text table (default).
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// `slug=dir`, repeatable.
    #[arg(long = "image-root", value_parser = parse_image_root)]
    image_roots: Vec<(String, PathBuf)>,
    #[arg(long)]
    cors: bool,
    #[arg(long, default_value_t = 10_000)]
    max_rows: usize,
}

fn parse_image_root(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((slug, dir)) if !slug.is_empty() && !dir.is_empty() => Ok((slug.to_owned(), PathBuf::from(dir))),
        _ => Err(format!("expected slug=dir, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vkg: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let store_path = cli.store.ok_or_else(|| CliError::Usage("--store <DIR> is required".into()))?;
    match cli.command {
        Command::Ingest(args) => ingest(&store_path, args),
        Command::Taxonomy { file } => taxonomy(&store_path, &file),
        Command::Enrich => {
            let mut dir = StoreDir::open(&store_path)?;
            let n = materialize(&mut dir.store);
            dir.save()?;
            println!("inferred {n} triples");
            Ok(())
        }
        Command::Query(args) => query(&store_path, args),
        Command::Export { request, out } => export_cmd(&store_path, &request, &out),
        Command::Stats => {
            let dir = StoreDir::open(&store_path)?;
            println!("{}", serde_json::to_string_pretty(&statistics(&dir.store)).expect("statistics serialize"));
            Ok(())
        }
        Command::Dump { out, asserted_only } => {
            let dir = StoreDir::open(&store_path)?;
            let text = dir.store.dump_ntriples(!asserted_only);
            match out {
                Some(p) => fs::write(&p, text).map_err(|e| CliError::io(&p, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Load { files, inferred } => {
            let mut dir = StoreDir::open(&store_path)?;
            let mut added = 0;
            for f in &files {
                let text = fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
                let loaded = load_ntriples(&text, inferred).map_err(|e| CliError::data(format!("{}: {e}", f.display())))?;
                for t in loaded.iter() {
                    added += usize::from(dir.store.insert(&t));
                }
            }
            dir.save()?;
            println!("loaded {added} new triples");
            Ok(())
        }
        Command::Serve(args) => serve(&store_path, args),
    }
}

fn ingest(store_path: &Path, args: IngestArgs) -> Result<(), CliError> {
    let mut dir = StoreDir::open(store_path)?;
    let rules = dir.rules(args.base.as_deref())?;
    let tasks = if args.tasks.is_empty() {
        vec![if args.format == SourceFormat::Cls { TaskKind::Classification } else { TaskKind::Detection }]
    } else {
        args.tasks
    };
    let descriptor = DatasetDescriptor::new(&args.slug, &args.name, args.license.as_deref(), args.source_url.as_deref(), tasks)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if vkg_core::catalog::datasets(&dir.store).iter().any(|d| d.slug == args.slug) {
        return Err(CliError::Usage(format!("dataset `{}` is already in {}", args.slug, store_path.display())));
    }
    let mut bundle = read_dataset(args.format, &args.paths, descriptor).map_err(|e| match e {
        LoadError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    if let Some(path) = &args.attrs {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let warnings = load_attributes(&text, &mut bundle).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        for w in warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
    }
    let taxonomy = dir.taxonomy()?;
    let inserted = map_to_triples(&rules, &bundle, &taxonomy, &mut dir.store).map_err(|e| CliError::data(e.to_string()))?;
    dir.meta.datasets.push(bundle.descriptor.clone());
    let stale = dir.store.inferred_len() > 0;
    dir.save()?;
    println!(
        "inserted {inserted} triples ({} images, {} annotations) for {}",
        bundle.images.len(),
        bundle.annotations.len(),
        args.slug
    );
    if stale {
        eprintln!("note: inferences predate this ingest; run `vkg enrich` to refresh them");
    }
    Ok(())
}

fn taxonomy(store_path: &Path, file: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let table = TaxonomyTable::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
    let mut dir = StoreDir::open(store_path)?;
    let rules = dir.rules(None)?;
    let axioms = apply_taxonomy(&table, &mut dir.store);
    let bridged = bridge_local_labels(&rules, &table, &mut dir.store);
    dir.set_taxonomy(&table);
    dir.save()?;
    println!(
        "taxonomy: {} concepts, {} alignments; added {} triples",
        table.concepts().len(),
        table.alignments().len(),
        axioms + bridged
    );
    Ok(())
}

fn query_error(source: &str, e: &QueryError) -> CliError {
    CliError::data(format!("{source}:{}:{}: {}: {}", e.line, e.column, e.kind, e.message))
}

fn query(store_path: &Path, args: QueryArgs) -> Result<(), CliError> {
    let (source, text) = match (args.source.file, args.source.expr) {
        (Some(f), _) => (f.display().to_string(), fs::read_to_string(&f).map_err(|e| CliError::io(&f, e))?),
        (None, Some(e)) => ("<expr>".to_owned(), e),
        (None, None) => return Err(CliError::Usage("one of -f or -e is required".into())),
    };
    let q = parse_query(&text).map_err(|e| query_error(&source, &e))?;
    let dir = StoreDir::open(store_path)?;
    let solutions = evaluate(&q, &dir.store);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&solutions.to_json()).expect("results serialize"));
    } else {
        print!("{}", render_table(&solutions));
    }
    Ok(())
}

fn render_table(sol: &Solutions) -> String {
    let cells: Vec<Vec<String>> = sol
        .rows
        .iter()
        .map(|row| row.iter().map(|c| c.as_ref().map(ToString::to_string).unwrap_or_default()).collect())
        .collect();
    let header: Vec<String> = sol.variables.iter().map(|v| format!("?{v}")).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|r| r[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |row: &[String]| {
        let padded: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_owned()
    };
    let mut out = String::new();
    if !header.is_empty() {
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    }
    for row in &cells {
        let _ = writeln!(out, "{}", line(row));
    }
    let _ = writeln!(out, "({} row{})", sol.len(), if sol.len() == 1 { "" } else { "s" });
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn export_cmd(store_path: &Path, request_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(request_path).map_err(|e| CliError::io(request_path, e))?;
    let request: ExportRequest = serde_json::from_str(&text).map_err(|e| {
        CliError::data(format!("{}:{}:{}: {e}", request_path.display(), e.line(), e.column()))
    })?;
    request.validate().map_err(|e| CliError::data(format!("{}: {e}", request_path.display())))?;
    let dir = StoreDir::open(store_path)?;
    let describe = |e: vkg_core::export::ExportError| match e {
        vkg_core::export::ExportError::Query(q) => query_error(&format!("{} (query)", request_path.display()), &q),
        other => CliError::data(format!("{}: {other}", request_path.display())),
    };
    let manifest = build_manifest(&request, &dir.store).map_err(describe)?;
    let payload = export(&request, &dir.store).map_err(describe)?;
    let mut written = vec![out.join("manifest.json")];
    write_file(&written[0], &manifest.to_json())?;
    match payload {
        ExportPayload::Coco(json) => {
            written.push(out.join("annotations.json"));
            write_file(&written[1], &json)?;
        }
        ExportPayload::Cls(csv) => {
            written.push(out.join("labels.csv"));
            write_file(&written[1], &csv)?;
        }
        ExportPayload::Kitti(files) => {
            for (stem, body) in files {
                let p = out.join("labels").join(format!("{stem}.txt"));
                write_file(&p, &body)?;
                written.push(p);
            }
        }
    }
    println!("exported {} images to {} ({} files)", manifest.images.len(), out.display(), written.len());
    Ok(())
}

fn serve(store_path: &Path, args: ServeArgs) -> Result<(), CliError> {
    let dir = StoreDir::open(store_path)?;
    let config = ServiceConfig {
        port: args.port,
        base_iri: dir.base_iri(),
        image_roots: args.image_roots.into_iter().collect::<BTreeMap<_, _>>(),
        max_rows: args.max_rows,
        cors_allowed: args.cors,
    };
    config.validate().map_err(CliError::Usage)?;
    let service = Service::new(dir.store.snapshot(), config);
    drop(dir);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("tokio runtime: {e}")))?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        eprintln!("listening on http://{addr}");
        spawn_reloader(service.clone(), store_path.to_owned());
        vkg_server::serve(service, listener, shutdown_signal())
            .await
            .map_err(|e| CliError::Io(format!("serve: {e}")))
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

#[cfg(unix)]
fn spawn_reloader(service: Service, path: PathBuf) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let p = path.clone();
            match tokio::task::spawn_blocking(move || StoreDir::open(&p)).await {
                Ok(Ok(dir)) => {
                    service.publish(dir.store.snapshot());
                    eprintln!("reloaded {} ({} triples)", path.display(), dir.store.len());
                }
                Ok(Err(e)) => eprintln!("reload failed, keeping previous snapshot: {}", e.message()),
                Err(e) => eprintln!("reload failed: {e}"),
            }
        }
    });
}

#[cfg(not(unix))]
fn spawn_reloader(_: Service, _: PathBuf) {}
