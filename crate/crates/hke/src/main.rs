fn main() -> anyhow::Result<()> {
    hke::cli::main()
}
