fn main() {
    println!("minlab");
}
