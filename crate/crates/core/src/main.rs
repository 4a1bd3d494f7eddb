//! railmon CLI: every layer of the stack behind one entry point.
//!
//! Exit codes: 0 success, 1 domain error (error name on stderr), 2 usage
//! error (clap). Output is machine-parseable JSON unless `--human`.

use std::error::Error;
use std::fmt;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use railmon::cloud::{evaluate_alarms, load_rules, query, ReadingStore};
use railmon::frame::{
    decode_frame, encode_frame, frame_to_json, RxMeta, TelemetryFrame, FRAME_LEN, NODE_GATEWAY_ID,
};
use railmon::gateway::{
    gateway_ingest, uplink_flush, GatewayConfig, IngestOutcome, NdjsonFileSink, UplinkQueue,
};
use railmon::netsim::{range_sweep, run_scenario_full, Scenario};
use railmon::node::{battery_life_days, energy_per_cycle_mah, NodeConfig};
use railmon::phy::{
    air_bit_rate_bps, link_budget_db, symbol_time_s, time_on_air_s, PathLossModel, RadioParams,
    GATEWAY_SERIAL_BAUD, RECEIVE_TIMEOUT_SYMBOLS,
};

#[derive(Parser)]
#[command(name = "railmon", version, about = "LoRa track-monitoring toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Tabular output instead of JSON where applicable.
    #[arg(long, global = true)]
    human: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Encode one telemetry frame to hex.
    Encode(EncodeArgs),
    /// Decode a hex frame (argument or stdin) to JSON.
    Decode {
        /// Hex string; read from stdin when omitted.
        hex: Option<String>,
    },
    /// Symbol time, air bit rate and time on air for a parameter set.
    Toa(ToaArgs),
    /// Print the default radio, channel and node parameters.
    Params,
    /// Run a scenario through the network simulator.
    Simulate(SimulateArgs),
    /// Replay a single-node scenario across a list of distances.
    RangeSweep(RangeSweepArgs),
    /// Ingest gateway uplink NDJSON into a reading store.
    Ingest(IngestArgs),
    /// Query a reading store by node and time range.
    Query(QueryArgs),
    /// Evaluate threshold alarm rules against a reading store.
    Alarms(AlarmsArgs),
}

#[derive(Args)]
struct EncodeArgs {
    /// Destination gateway ID.
    #[arg(long, default_value_t = NODE_GATEWAY_ID)]
    gw: u8,
    /// Source node ID (6..=9).
    #[arg(long)]
    node: u8,
    #[arg(long, default_value_t = 0)]
    reserved: u8,
    /// Acceleration X in milli-g.
    #[arg(long, allow_hyphen_values = true)]
    ax: i32,
    /// Acceleration Y in milli-g.
    #[arg(long, allow_hyphen_values = true)]
    ay: i32,
    /// Acceleration Z in milli-g.
    #[arg(long, allow_hyphen_values = true)]
    az: i32,
    /// Temperature in hundredths of a degree Celsius.
    #[arg(long, allow_hyphen_values = true)]
    temp: i16,
    /// Pressure in hundredths of a kPa.
    #[arg(long)]
    pres: u16,
}

#[derive(Args)]
struct ToaArgs {
    #[arg(long, default_value_t = 12)]
    sf: u8,
    #[arg(long, default_value_t = 500_000)]
    bw: u32,
    /// Coding rate denominator (CR = 4/crden).
    #[arg(long, default_value_t = 5)]
    crden: u8,
    #[arg(long, default_value_t = 8)]
    preamble: u32,
    /// Payload length in bytes.
    #[arg(long, default_value_t = FRAME_LEN)]
    payload: usize,
    /// Implicit (fixed-length) header.
    #[arg(long)]
    implicit: bool,
    /// Disable the radio-level payload CRC.
    #[arg(long)]
    no_crc: bool,
    /// Enable low-data-rate optimization.
    #[arg(long)]
    ldro: bool,
    /// Emit a payload sweep table from 0 to this length.
    #[arg(long)]
    sweep: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Seed override (beats RAILMON_SEED and the scenario file).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the gateway uplink NDJSON here.
    #[arg(long)]
    uplink: Option<PathBuf>,
    /// Write the delivery timeline as CSV here.
    #[arg(long)]
    timeline: Option<PathBuf>,
}

#[derive(Args)]
struct RangeSweepArgs {
    scenario: PathBuf,
    /// Distances in meters.
    #[arg(long, value_delimiter = ',', required = true)]
    distances: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Uplink NDJSON file to ingest.
    input: PathBuf,
    /// Reading store file (created if missing).
    #[arg(long)]
    store: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    node: Option<u8>,
    /// Range start, milliseconds.
    #[arg(long, default_value_t = 0)]
    from: u64,
    /// Range end, milliseconds (inclusive).
    #[arg(long, default_value_t = u64::MAX)]
    to: u64,
}

#[derive(Args)]
struct AlarmsArgs {
    #[arg(long)]
    store: PathBuf,
    /// JSON list of alarm rules.
    #[arg(long)]
    rules: PathBuf,
}

/// Domain error with a name-first message, printed verbatim on stderr.
#[derive(Debug)]
struct CliMessage(String);

impl fmt::Display for CliMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for CliMessage {}

fn fail(name: &str, detail: impl fmt::Display) -> Box<dyn Error> {
    Box::new(CliMessage(format!("{name}: {detail}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Decode { hex } => cmd_decode(hex),
        Command::Toa(args) => cmd_toa(args, cli.human),
        Command::Params => cmd_params(),
        Command::Simulate(args) => cmd_simulate(args),
        Command::RangeSweep(args) => cmd_range_sweep(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Query(args) => cmd_query(args, cli.human),
        Command::Alarms(args) => cmd_alarms(args),
    }
}

fn cmd_encode(args: EncodeArgs) -> Result<(), Box<dyn Error>> {
    let frame = TelemetryFrame {
        gateway_id: args.gw,
        node_id: args.node,
        reserved: args.reserved,
        accel_x_mg: args.ax,
        accel_y_mg: args.ay,
        accel_z_mg: args.az,
        temp_centi_c: args.temp,
        pressure_centi_kpa: args.pres,
    };
    let wire = encode_frame(&frame)?;
    println!("{}", wire.to_hex());
    Ok(())
}

fn cmd_decode(hex_arg: Option<String>) -> Result<(), Box<dyn Error>> {
    let text = match hex_arg {
        Some(text) => text,
        None => {
            let mut buffer = String::new();
            std::io::stdin()
                .read_to_string(&mut buffer)
                .map_err(|e| fail("InvalidHex", format!("cannot read stdin: {e}")))?;
            buffer
        }
    };
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = hex::decode(&cleaned).map_err(|e| fail("InvalidHex", e))?;
    let frame = decode_frame(&bytes)?;
    println!("{}", frame_to_json(&frame, &RxMeta::absent()));
    Ok(())
}

fn toa_params(args: &ToaArgs) -> RadioParams {
    RadioParams {
        spreading_factor: args.sf,
        bandwidth_hz: args.bw,
        coding_rate_denominator: args.crden,
        preamble_symbols: args.preamble,
        explicit_header: !args.implicit,
        radio_crc_on: !args.no_crc,
        low_data_rate_opt: args.ldro,
        ..RadioParams::default()
    }
}

fn cmd_toa(args: ToaArgs, human: bool) -> Result<(), Box<dyn Error>> {
    let params = toa_params(&args);
    params.validate()?;

    if let Some(max_payload) = args.sweep {
        let mut rows = Vec::with_capacity(max_payload + 1);
        for payload in 0..=max_payload {
            rows.push(json!({
                "payload_bytes": payload,
                "time_on_air_s": time_on_air_s(&params, payload)?,
            }));
        }
        if human {
            println!("{:>13}  {:>14}", "payload_bytes", "time_on_air_s");
            for row in &rows {
                println!(
                    "{:>13}  {:>14.6}",
                    row["payload_bytes"],
                    row["time_on_air_s"].as_f64().unwrap()
                );
            }
        } else {
            println!("{}", serde_json::to_string(&rows)?);
        }
        return Ok(());
    }

    let toa = time_on_air_s(&params, args.payload)?;
    let output = json!({
        "spreading_factor": params.spreading_factor,
        "bandwidth_hz": params.bandwidth_hz,
        "coding_rate_denominator": params.coding_rate_denominator,
        "payload_bytes": args.payload,
        "symbol_time_s": symbol_time_s(&params),
        "air_bit_rate_bps": air_bit_rate_bps(&params),
        "time_on_air_s": toa,
    });
    if human {
        println!(
            "SF{} BW{} CR4/{} payload {} B",
            params.spreading_factor,
            params.bandwidth_hz,
            params.coding_rate_denominator,
            args.payload
        );
        println!("symbol time    {:.6} s", symbol_time_s(&params));
        println!("air bit rate   {:.3} bps", air_bit_rate_bps(&params));
        println!("time on air    {:.6} s", toa);
    } else {
        println!("{output}");
    }
    Ok(())
}

fn cmd_params() -> Result<(), Box<dyn Error>> {
    let radio = RadioParams::default();
    let path_loss = PathLossModel::default();
    let node = NodeConfig::new(railmon::frame::NODE_ID_MIN);
    let output = json!({
        "radio": radio,
        "path_loss": path_loss,
        "node": node,
        "derived": {
            "symbol_time_s": symbol_time_s(&radio),
            "air_bit_rate_bps": air_bit_rate_bps(&radio),
            "link_budget_db": link_budget_db(&radio),
            "frame_time_on_air_s": time_on_air_s(&radio, FRAME_LEN)?,
            "energy_per_cycle_mah": energy_per_cycle_mah(&node)?,
            "battery_life_days": battery_life_days(&node)?,
        },
        "constants": {
            "frame_len_bytes": FRAME_LEN,
            "gateway_id": NODE_GATEWAY_ID,
            "serial_baud": GATEWAY_SERIAL_BAUD,
            "receive_timeout_symbols": RECEIVE_TIMEOUT_SYMBOLS,
        },
    });
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

/// Seed precedence: --seed flag, then RAILMON_SEED, then the scenario file.
fn apply_seed(scenario: &mut Scenario, flag: Option<u64>) -> Result<(), Box<dyn Error>> {
    if let Some(seed) = flag {
        scenario.seed = seed;
        return Ok(());
    }
    if let Ok(text) = std::env::var("RAILMON_SEED") {
        let seed: u64 = text
            .parse()
            .map_err(|e| fail("InvalidSeed", format!("RAILMON_SEED {text:?}: {e}")))?;
        scenario.seed = seed;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Box<dyn Error>> {
    let mut scenario = Scenario::from_path(&args.scenario)?;
    apply_seed(&mut scenario, args.seed)?;
    let output = run_scenario_full(&scenario)?;

    if let Some(path) = &args.uplink {
        if path.exists() {
            std::fs::remove_file(path)
                .map_err(|e| fail("SinkUnavailable", format!("{}: {e}", path.display())))?;
        }
        let cfg = GatewayConfig::default();
        let mut queue = UplinkQueue::new();
        for rx in &output.received {
            match gateway_ingest(&cfg, rx.wire.as_ref(), &rx.meta) {
                IngestOutcome::Accepted(record) => queue.enqueue(record),
                IngestOutcome::Rejected(rejection) => {
                    return Err(fail(
                        "GatewayRejection",
                        format!("simulated frame rejected: {}", rejection.error),
                    ))
                }
            }
        }
        let mut sink = NdjsonFileSink::create(path)?;
        uplink_flush(&mut queue, &mut sink)?;
    }

    if let Some(path) = &args.timeline {
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| fail("SinkUnavailable", format!("{}: {e}", path.display())))?;
        writer.write_record(["time_s", "node_id", "rssi_dbm", "rx_timestamp_ms"])?;
        for d in &output.report.deliveries {
            writer.write_record([
                d.time_s.to_string(),
                d.node_id.to_string(),
                d.rssi_dbm.to_string(),
                d.rx_timestamp_ms.to_string(),
            ])?;
        }
        writer.flush()?;
    }

    let report_json = output.report.to_json_string();
    match &args.out {
        Some(path) => std::fs::write(path, format!("{report_json}\n"))
            .map_err(|e| fail("SinkUnavailable", format!("{}: {e}", path.display())))?,
        None => println!("{report_json}"),
    }
    Ok(())
}

fn cmd_range_sweep(args: RangeSweepArgs) -> Result<(), Box<dyn Error>> {
    let mut scenario = Scenario::from_path(&args.scenario)?;
    apply_seed(&mut scenario, args.seed)?;
    let report = range_sweep(&scenario, &args.distances)?;
    let rendered = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, format!("{rendered}\n"))
            .map_err(|e| fail("SinkUnavailable", format!("{}: {e}", path.display())))?,
        None => println!("{rendered}"),
    }
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Box<dyn Error>> {
    let contents = std::fs::read_to_string(&args.input)
        .map_err(|e| fail("StoreUnavailable", format!("{}: {e}", args.input.display())))?;
    let mut store = ReadingStore::open(&args.store)?;
    let stats = store.ingest_lines(contents.lines())?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn cmd_query(args: QueryArgs, human: bool) -> Result<(), Box<dyn Error>> {
    let store = ReadingStore::open(&args.store)?;
    let readings = query(&store, args.node, args.from, args.to)?;
    if human {
        println!(
            "{:>6} {:>14} {:>8} {:>8} {:>8} {:>9} {:>12} {:>8}",
            "node", "rx_ms", "ax_mg", "ay_mg", "az_mg", "temp_c", "pressure_kpa", "rssi"
        );
        for r in &readings {
            println!(
                "{:>6} {:>14} {:>8} {:>8} {:>8} {:>9.2} {:>12.2} {:>8}",
                r.node_id,
                r.rx_timestamp_ms.map_or("-".to_string(), |t| t.to_string()),
                r.ax_mg,
                r.ay_mg,
                r.az_mg,
                r.temp_c,
                r.pressure_kpa,
                r.rssi_dbm.map_or("-".to_string(), |v| format!("{v:.1}")),
            );
        }
    } else {
        println!("{}", serde_json::to_string(&readings)?);
    }
    Ok(())
}

fn cmd_alarms(args: AlarmsArgs) -> Result<(), Box<dyn Error>> {
    let store = ReadingStore::open(&args.store)?;
    let rules = load_rules(&args.rules)?;
    let alarms = evaluate_alarms(&store, &rules);
    println!("{}", serde_json::to_string(&alarms)?);
    Ok(())
}
