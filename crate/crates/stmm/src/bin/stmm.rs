fn main() -> ! {
    stmm::cli::main()
}
